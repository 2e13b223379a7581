/**
 * Thin HTTP client for the release service. Fetch is injected so tests can
 * spy on or reorder calls; node 20's global fetch is the default.
 */

import type { ApiError, MetadataDocument, RepartitionResponse, RequestEntry } from "./types.js";

export type FetchLike = (
  input: string,
  init?: RequestInit,
) => Promise<Response>;

export interface ApiResult<T> {
  status: number;
  body: T | null;
  error: ApiError | null;
}

export interface ReleaseResponse {
  batch_id: string;
  records: Array<Record<string, unknown>>;
  remaining: { epsilon: number; delta: number };
}

export class ApiClient {
  private readonly baseUrl: string;
  private readonly fetchImpl: FetchLike;
  private readonly token?: string;

  constructor(baseUrl: string, fetchImpl?: FetchLike, token?: string) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.fetchImpl = fetchImpl ?? ((input, init) => fetch(input, init));
    this.token = token;
  }

  withToken(token: string): ApiClient {
    return new ApiClient(this.baseUrl, this.fetchImpl, token);
  }

  private headers(json: boolean): Record<string, string> {
    const headers: Record<string, string> = {};
    if (json) headers["Content-Type"] = "application/json";
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    return headers;
  }

  private async call<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<ApiResult<T>> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers: this.headers(body !== undefined),
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = await response.json().catch(() => null);
    if (!response.ok) {
      const detail = (payload as { detail?: ApiError } | null)?.detail ?? {
        reason: `HTTP ${response.status}`,
        source: "http",
      };
      return { status: response.status, body: null, error: detail };
    }
    return { status: response.status, body: payload as T, error: null };
  }

  repartition(body: Record<string, unknown>): Promise<ApiResult<RepartitionResponse>> {
    return this.call("POST", "/repartition", body);
  }

  release(
    datasetId: string,
    batch: RequestEntry[],
    batchId?: string,
  ): Promise<ApiResult<ReleaseResponse>> {
    const body: Record<string, unknown> = { dataset_id: datasetId, batch };
    if (batchId) body["batch_id"] = batchId;
    return this.call("POST", "/release", body);
  }

  publicMetadata(datasetId: string): Promise<ApiResult<MetadataDocument>> {
    return this.call("GET", `/metadata/public/${datasetId}`);
  }

  userMetadata(datasetId: string): Promise<ApiResult<MetadataDocument>> {
    return this.call("GET", `/metadata/user/${datasetId}`);
  }
}
