/**
 * The budgeting edit cycle: every mutation copies the whole page state to
 * POST /repartition and rewrites the summary table from the response.
 *
 * Responses are guarded by a monotone sequence number: an edit issued later
 * always wins, and a slow response to an earlier edit is discarded instead
 * of clobbering the table. Client-side validation only mirrors the server's
 * input schema (it can block an obviously bad delta before a request is
 * even sent); all numbers shown to the user are server-originated.
 */

import { ApiClient, ReleaseResponse, ApiResult } from "./api.js";
import {
  applyResponse,
  findRequest,
  initialState,
  repartitionBody,
  validateGlobals,
  validateSample,
} from "./state.js";
import type {
  ApiError,
  BudgetPageState,
  GlobalParams,
  RequestEntry,
  StatisticKind,
  VariableEntry,
} from "./types.js";

export interface EditResult {
  applied: boolean;
  stale: boolean;
  error: ApiError | null;
}

const BLOCKED: EditResult = { applied: false, stale: false, error: null };

export class BudgetController {
  private state: BudgetPageState;
  private readonly api: ApiClient;
  /** sequence number of the most recent edit sent */
  private issued = 0;
  /** sequence number of the most recent response applied */
  private applied = 0;
  /** plan snapshot the last applied response returned, for finalize */
  private lastPlanJson: string | null = null;
  private finalized = false;

  constructor(
    api: ApiClient,
    datasetId: string,
    n: number,
    variables: VariableEntry[],
    globalParams: GlobalParams,
  ) {
    this.api = api;
    this.state = initialState(datasetId, n, variables, globalParams);
  }

  page(): BudgetPageState {
    return this.state;
  }

  /** The last server-returned plan; what finalize will submit, verbatim. */
  currentPlanJson(): string | null {
    return this.lastPlanJson;
  }

  // -- mutations ----------------------------------------------------------

  addStatistic(entry: {
    id: string;
    kind: StatisticKind;
    variable?: string;
    transform?: string;
    transform_range?: [number, number];
    n_bins?: number;
    grid_size?: number;
    grid_cells?: number;
    q?: number;
  }): Promise<EditResult> {
    if (findRequest(this.state, entry.id)) {
      this.state = {
        ...this.state,
        fieldErrors: { [`request.${entry.id}`]: "duplicate statistic id" },
      };
      return Promise.resolve(BLOCKED);
    }
    return this.cycle({
      ...this.state,
      requests: [...this.state.requests, { ...entry, hold: false }],
    });
  }

  deleteStatistic(id: string): Promise<EditResult> {
    return this.cycle({
      ...this.state,
      requests: this.state.requests.filter((r) => r.id !== id),
    });
  }

  /** Edit the displayed error radius; the server translates it back. */
  setAccuracy(id: string, accuracy: number): Promise<EditResult> {
    if (!(accuracy > 0)) {
      this.state = {
        ...this.state,
        fieldErrors: { [`request.${id}.accuracy`]: "accuracy must be positive" },
      };
      return Promise.resolve(BLOCKED);
    }
    return this.cycle({
      ...this.state,
      requests: this.state.requests.map((r) =>
        r.id === id ? { ...r, accuracy, epsilon: undefined } : r,
      ),
    });
  }

  setHold(id: string, hold: boolean): Promise<EditResult> {
    return this.cycle({
      ...this.state,
      requests: this.state.requests.map((r) =>
        r.id === id ? { ...r, hold } : r,
      ),
    });
  }

  setGlobalParams(params: GlobalParams): Promise<EditResult> {
    const errors = validateGlobals(params);
    if (Object.keys(errors).length > 0) {
      // blocked before any request leaves the page
      this.state = { ...this.state, fieldErrors: errors };
      return Promise.resolve(BLOCKED);
    }
    return this.cycle({ ...this.state, globalParams: params });
  }

  setSecretSample(enabled: boolean, populationSize?: number): Promise<EditResult> {
    const sample = {
      is_secret_sample: enabled,
      m: enabled ? populationSize ?? this.state.n : this.state.n,
    };
    const errors = validateSample(sample, this.state.n);
    if (Object.keys(errors).length > 0) {
      this.state = { ...this.state, fieldErrors: errors };
      return Promise.resolve(BLOCKED);
    }
    return this.cycle({ ...this.state, sample });
  }

  setAnalystEpsilon(epsilon: number): Promise<EditResult> {
    if (!(epsilon >= 0)) {
      this.state = {
        ...this.state,
        fieldErrors: { analyst_epsilon: "reservation must be non-negative" },
      };
      return Promise.resolve(BLOCKED);
    }
    return this.cycle({ ...this.state, analystEpsilon: epsilon });
  }

  setConfidenceLevel(level: number): Promise<EditResult> {
    if (!(level > 0 && level < 1)) {
      this.state = {
        ...this.state,
        fieldErrors: { confidence_level: "confidence level must be in (0, 1)" },
      };
      return Promise.resolve(BLOCKED);
    }
    return this.cycle({ ...this.state, confidenceLevel: level });
  }

  // -- the cycle ----------------------------------------------------------

  private async cycle(candidate: BudgetPageState): Promise<EditResult> {
    const seq = ++this.issued;
    this.state = candidate; // page reflects the edit immediately
    this.finalized = false; // any edit invalidates a previous plan
    const result = await this.api.repartition(repartitionBody(candidate));
    if (seq < this.issued || seq <= this.applied) {
      return { applied: false, stale: true, error: null }; // superseded
    }
    if (result.error || result.body === null) {
      this.state = {
        ...this.state,
        fieldErrors: {
          [result.error?.source ?? "request"]: result.error?.reason ?? "error",
        },
      };
      return { applied: false, stale: false, error: result.error };
    }
    this.applied = seq;
    this.state = applyResponse(this.state, result.body);
    this.lastPlanJson = JSON.stringify(result.body.requests);
    return { applied: true, stale: false, error: null };
  }

  // -- finalize -----------------------------------------------------------

  /**
   * Submit the last server-returned plan, byte for byte. Blocked when an
   * edit has not completed its repartition round (a stale plan must be
   * refreshed first), and the client never retries with altered parameters.
   */
  async finalize(batchId?: string): Promise<ApiResult<ReleaseResponse>> {
    if (this.lastPlanJson === null || this.issued !== this.applied) {
      return {
        status: 0,
        body: null,
        error: {
          reason: "plan is stale: wait for the current repartition round",
          source: "finalize",
        },
      };
    }
    const plan = JSON.parse(this.lastPlanJson) as RequestEntry[];
    const result = await this.api.release(
      this.state.datasetId,
      plan,
      batchId,
    );
    this.finalized = result.status === 200;
    return result;
  }

  isFinalized(): boolean {
    return this.finalized;
  }
}
