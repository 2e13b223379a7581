/**
 * Pure page-state helpers: building the repartition body and rewriting the
 * table from a server response. No privacy arithmetic happens here; every
 * epsilon, accuracy, and total is copied verbatim from the server.
 */

import type {
  BudgetPageState,
  GlobalParams,
  RepartitionResponse,
  RequestEntry,
  SampleState,
  VariableEntry,
} from "./types.js";

/**
 * Input-validation mirror of the server's vetting thresholds. These are
 * schema constants, not computations; the server remains the authority and
 * re-rejects anything that slips through.
 */
export const DELTA_REJECT_AT = 1e-4;
export const DELTA_WARN_ABOVE = 1e-6;
export const EPSILON_WARN_ABOVE = 1.0;

export function initialState(
  datasetId: string,
  n: number,
  variables: VariableEntry[],
  globalParams: GlobalParams,
): BudgetPageState {
  return {
    datasetId,
    n,
    variables,
    globalParams,
    sample: { is_secret_sample: false, m: n },
    analystEpsilon: 0,
    confidenceLevel: 0.95,
    requests: [],
    totals: null,
    effective: null,
    analystShare: null,
    sampleBoost: 1,
    warnings: [],
    fieldErrors: {},
  };
}

export function validateGlobals(params: GlobalParams): Record<string, string> {
  const errors: Record<string, string> = {};
  if (!Number.isFinite(params.epsilon) || params.epsilon <= 0) {
    errors["global.epsilon"] = "epsilon must be a positive number";
  }
  if (!Number.isFinite(params.delta) || params.delta < 0) {
    errors["global.delta"] = "delta must be a number in [0, 1)";
  } else if (params.delta >= DELTA_REJECT_AT) {
    errors["global.delta"] =
      `delta=${params.delta} is far too large; it bounds the probability of ` +
      "arbitrary leakage and must be negligible (at most 1e-4, ideally ~2^-30)";
  }
  return errors;
}

export function validateSample(sample: SampleState, n: number): Record<string, string> {
  const errors: Record<string, string> = {};
  if (sample.is_secret_sample && (!Number.isFinite(sample.m) || sample.m < n)) {
    errors["sample.m"] = `population size must be at least the sample size ${n}`;
  }
  return errors;
}

/** The complete /repartition body; the page state is its only source. */
export function repartitionBody(state: BudgetPageState): Record<string, unknown> {
  return {
    global: {
      epsilon: state.globalParams.epsilon,
      delta: state.globalParams.delta,
    },
    n: state.n,
    sample: {
      is_secret_sample: state.sample.is_secret_sample,
      n: state.n,
      m: state.sample.is_secret_sample ? state.sample.m : state.n,
    },
    analyst_epsilon: state.analystEpsilon,
    variables: state.variables,
    requests: state.requests.map((entry) => ({
      ...entry,
      alpha: roundAlpha(1 - state.confidenceLevel),
    })),
  };
}

/** Binary floats like 1 - 0.98 carry representation dust; trim for display
 * and wire stability. Purely cosmetic, not privacy math. */
function roundAlpha(alpha: number): number {
  return Number(alpha.toPrecision(6));
}

/** Rewrite the summary table with exactly what the server returned. */
export function applyResponse(
  state: BudgetPageState,
  response: RepartitionResponse,
): BudgetPageState {
  return {
    ...state,
    requests: response.requests,
    totals: response.totals,
    effective: response.effective,
    analystShare: response.analyst,
    sampleBoost: response.sample_boost,
    warnings: response.warnings,
    fieldErrors: {},
  };
}

export function findRequest(
  state: BudgetPageState,
  id: string,
): RequestEntry | undefined {
  return state.requests.find((r) => r.id === id);
}
