/**
 * Shared types for the budgeting interface.
 *
 * The page state is the complete input to POST /repartition: the client
 * holds no authoritative privacy arithmetic, it only round-trips values
 * the server computed.
 */

export type VariableKind = "numeric" | "categorical" | "boolean";

export interface VariableEntry {
  name: string;
  kind: VariableKind;
  lower?: number;
  upper?: number;
  categories?: string[];
  description?: string;
}

export type StatisticKind = "mean" | "histogram" | "cdf" | "quantile";

/** One row of the selections table; epsilon/accuracy are server-originated. */
export interface RequestEntry {
  id: string;
  kind: StatisticKind;
  variable?: string;
  transform?: string;
  transform_range?: [number, number];
  epsilon?: number;
  accuracy?: number;
  delta?: number;
  alpha?: number;
  hold?: boolean;
  n_bins?: number;
  grid_size?: number;
  grid_cells?: number;
  q?: number;
  use_snapping?: boolean;
}

export interface GlobalParams {
  epsilon: number;
  delta: number;
}

export interface SampleState {
  is_secret_sample: boolean;
  m: number;
}

export interface PlanTotals {
  epsilon_basic: number;
  epsilon_composed: number;
  epsilon_budget: number;
  delta_budget: number;
  within_budget: boolean;
}

export interface BudgetShare {
  epsilon: number;
  delta: number;
}

export interface RepartitionResponse {
  requests: RequestEntry[];
  totals: PlanTotals;
  effective: BudgetShare;
  depositor: BudgetShare;
  analyst: BudgetShare;
  sample_boost: number;
  warnings: string[];
}

export interface ReleaseRecord {
  record_id: string;
  request_id: string;
  statistic: StatisticKind;
  variable: string;
  epsilon: number;
  delta: number;
  accuracy: number;
  alpha: number;
  value: number | number[];
  batch_id: string;
  timestamp: number;
  payload: Record<string, unknown>;
}

export interface MetadataDocument {
  format_version: number;
  dataset_id: string;
  audience: string;
  n: number;
  variables: VariableEntry[];
  releases: ReleaseRecord[];
}

export interface ApiError {
  reason: string;
  source: string;
  [key: string]: unknown;
}

/** The full budgeting page state; serializing it yields the request body. */
export interface BudgetPageState {
  datasetId: string;
  n: number;
  variables: VariableEntry[];
  globalParams: GlobalParams;
  sample: SampleState;
  analystEpsilon: number;
  confidenceLevel: number;
  requests: RequestEntry[];
  totals: PlanTotals | null;
  effective: BudgetShare | null;
  analystShare: BudgetShare | null;
  sampleBoost: number;
  warnings: string[];
  fieldErrors: Record<string, string>;
}
