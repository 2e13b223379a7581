/**
 * Scripted depositor session (usability tasks 2-11) against the live
 * service: the client's final plan must be byte-identical to a direct API
 * replay of the same edit sequence, the finalize must publish, and an
 * obviously swapped delta must be blocked client-side and rejected by the
 * server.
 */

import { describe, expect, inject, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { BudgetController } from "../src/controller.js";
import { renderMetadata } from "../src/viewer.js";
import type {
  GlobalParams,
  RequestEntry,
  StatisticKind,
  VariableEntry,
} from "../src/types.js";

const VARIABLES: VariableEntry[] = [
  { name: "age", kind: "numeric", lower: 18, upper: 95 },
  { name: "income", kind: "numeric", lower: 0, upper: 250000 },
  { name: "education", kind: "numeric", lower: 0, upper: 20 },
  {
    name: "race",
    kind: "categorical",
    categories: ["white", "black", "asian", "hispanic", "mixed"],
  },
  { name: "sex", kind: "categorical", categories: ["female", "male"] },
  { name: "married", kind: "boolean" },
];

const N = 1000;
const INITIAL_GLOBALS: GlobalParams = { epsilon: 0.5, delta: Math.pow(2, -20) };

type Edit =
  | { type: "add"; entry: { id: string; kind: StatisticKind; variable: string; q?: number } }
  | { type: "delete"; id: string }
  | { type: "confidence"; level: number }
  | { type: "globals"; params: GlobalParams }
  | { type: "sample"; m: number }
  | { type: "analyst"; epsilon: number }
  | { type: "accuracy"; id: string; accuracy: number }
  | { type: "hold"; id: string; hold: boolean };

// Tasks 1-10 as one deterministic edit script (task 1's tutorial ends with
// a mean of age selected; task 8 is a pure read and has no edit).
const SCRIPT: Edit[] = [
  { type: "add", entry: { id: "mean-age", kind: "mean", variable: "age" } },
  { type: "add", entry: { id: "mean-income", kind: "mean", variable: "income" } },
  { type: "add", entry: { id: "quantile-income", kind: "quantile", variable: "income", q: 0.5 } },
  { type: "add", entry: { id: "hist-race", kind: "histogram", variable: "race" } },
  { type: "delete", id: "quantile-income" },
  { type: "confidence", level: 0.98 },
  { type: "globals", params: { epsilon: 0.25, delta: Math.pow(2, -20) } },
  { type: "sample", m: 1_200_000 },
  { type: "analyst", epsilon: 0.05 },
  { type: "accuracy", id: "mean-age", accuracy: 1.0 },
  { type: "hold", id: "mean-age", hold: true },
  { type: "accuracy", id: "hist-race", accuracy: 5.0 },
];

async function driveController(baseUrl: string, token: string) {
  const api = new ApiClient(baseUrl).withToken(token);
  const controller = new BudgetController(api, "county", N, VARIABLES, INITIAL_GLOBALS);
  const checkpoints: Record<string, number> = {};
  for (const edit of SCRIPT) {
    let result;
    switch (edit.type) {
      case "add":
        result = await controller.addStatistic(edit.entry);
        break;
      case "delete":
        result = await controller.deleteStatistic(edit.id);
        break;
      case "confidence":
        result = await controller.setConfidenceLevel(edit.level);
        break;
      case "globals":
        result = await controller.setGlobalParams(edit.params);
        break;
      case "sample":
        result = await controller.setSecretSample(true, edit.m);
        break;
      case "analyst":
        result = await controller.setAnalystEpsilon(edit.epsilon);
        break;
      case "accuracy":
        result = await controller.setAccuracy(edit.id, edit.accuracy);
        break;
      case "hold":
        result = await controller.setHold(edit.id, edit.hold);
        break;
    }
    expect(result.applied, `edit ${JSON.stringify(edit)} must apply`).toBe(true);
    if (edit.type === "confidence") {
      // task 4 checkpoint: a 98% level widens every error radius
      checkpoints["after-confidence"] = meanAgeAccuracy(controller);
    }
    if (edit.type === "delete") {
      checkpoints["after-delete"] = meanAgeAccuracy(controller);
    }
    if (edit.type === "sample") {
      checkpoints["after-sample"] = meanAgeAccuracy(controller);
      expect(controller.page().sampleBoost).toBeGreaterThan(1);
    }
  }
  return { controller, checkpoints };
}

function meanAgeAccuracy(controller: BudgetController): number {
  const entry = controller.page().requests.find((r) => r.id === "mean-age");
  expect(entry?.accuracy).toBeGreaterThan(0);
  return entry!.accuracy!;
}

/**
 * Independent replay: plain fetch calls, bodies assembled by hand from the
 * documented wire format, each cycle feeding the previous response's
 * requests back. Shares nothing with the client modules under test.
 */
async function replayDirect(baseUrl: string): Promise<string> {
  let globals = { ...INITIAL_GLOBALS };
  let sample = { is_secret_sample: false, n: N, m: N };
  let analystEpsilon = 0;
  let alpha = 0.05;
  let entries: RequestEntry[] = [];

  const roundAlpha = (a: number) => Number(a.toPrecision(6));

  async function post(): Promise<RequestEntry[]> {
    const body = {
      global: globals,
      n: N,
      sample,
      analyst_epsilon: analystEpsilon,
      variables: VARIABLES,
      requests: entries.map((entry) => ({ ...entry, alpha: roundAlpha(alpha) })),
    };
    const response = await fetch(`${baseUrl}/repartition`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    expect(response.status).toBe(200);
    const payload = (await response.json()) as { requests: RequestEntry[] };
    return payload.requests;
  }

  for (const edit of SCRIPT) {
    switch (edit.type) {
      case "add":
        entries = [...entries, { ...edit.entry, hold: false }];
        break;
      case "delete":
        entries = entries.filter((entry) => entry.id !== edit.id);
        break;
      case "confidence":
        alpha = 1 - edit.level;
        break;
      case "globals":
        globals = { ...edit.params };
        break;
      case "sample":
        sample = { is_secret_sample: true, n: N, m: edit.m };
        break;
      case "analyst":
        analystEpsilon = edit.epsilon;
        break;
      case "accuracy":
        entries = entries.map((entry) =>
          entry.id === edit.id
            ? { ...entry, accuracy: edit.accuracy, epsilon: undefined }
            : entry,
        );
        break;
      case "hold":
        entries = entries.map((entry) =>
          entry.id === edit.id ? { ...entry, hold: edit.hold } : entry,
        );
        break;
    }
    entries = await post();
  }
  return JSON.stringify(entries);
}

describe("scripted depositor session (usability tasks 2-11)", () => {
  it("client plan is byte-identical to a direct API replay, then finalizes", async () => {
    const baseUrl = inject("baseUrl") as string;
    const token = inject("depositorToken") as string;

    const { controller, checkpoints } = await driveController(baseUrl, token);

    // deleting a statistic freed budget: error radii tightened (task 3),
    // and the 98% confidence level widened them again (task 4)
    expect(checkpoints["after-delete"]).toBeLessThan(
      checkpoints["after-confidence"],
    );
    // secrecy of the sample improved accuracy (task 6)
    expect(checkpoints["after-sample"]).toBeLessThan(
      checkpoints["after-confidence"],
    );

    // task 10: the held mean-age kept its epsilon across the last edit
    const page = controller.page();
    const meanAge = page.requests.find((r) => r.id === "mean-age");
    expect(meanAge?.hold).toBe(true);
    // task 8: the error estimate is a displayed, server-provided number
    expect(meanAge?.accuracy).toBeGreaterThan(0);
    expect(page.totals?.within_budget).toBe(true);

    const clientPlan = controller.currentPlanJson();
    const replayPlan = await replayDirect(baseUrl);
    expect(clientPlan).toBe(replayPlan); // byte-identical

    // task 11: finalize submits the plan verbatim and publishes
    const release = await controller.finalize("session-final");
    expect(release.status).toBe(200);
    expect(controller.isFinalized()).toBe(true);
    const records = release.body!.records as Array<{ request_id: string; epsilon: number }>;
    const planEntries = JSON.parse(clientPlan!) as RequestEntry[];
    expect(records.map((r) => r.request_id).sort()).toEqual(
      planEntries.map((e) => e.id).sort(),
    );
    for (const record of records) {
      const entry = planEntries.find((e) => e.id === record.request_id)!;
      expect(record.epsilon).toBe(entry.epsilon);
    }

    // the viewer renders the public metadata with confidence intervals
    const metadata = await new ApiClient(baseUrl).publicMetadata("county");
    expect(metadata.status).toBe(200);
    const html = renderMetadata(metadata.body!);
    expect(html).toContain("data-record");
    expect(html).toContain("CI");
  });

  it("blocks a swapped delta client-side; the server confirms with 422", async () => {
    const baseUrl = inject("baseUrl") as string;
    const calls: string[] = [];
    const spyFetch = (input: string, init?: RequestInit) => {
      calls.push(input);
      return fetch(input, init);
    };
    const api = new ApiClient(baseUrl, spyFetch);
    const controller = new BudgetController(api, "county", N, VARIABLES, INITIAL_GLOBALS);

    const result = await controller.setGlobalParams({ epsilon: 1e-6, delta: 0.25 });
    expect(result.applied).toBe(false);
    expect(calls).toHaveLength(0); // blocked before any request was sent
    expect(controller.page().fieldErrors["global.delta"]).toMatch(/too large/);

    // the server would reject the same entry anyway
    const response = await fetch(`${baseUrl}/repartition`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({
        global: { epsilon: 1e-6, delta: 0.25 },
        n: N,
        variables: VARIABLES,
        requests: [],
      }),
    });
    expect(response.status).toBe(422);
    const detail = (await response.json()) as { detail: { source: string } };
    expect(detail.detail.source).toBe("vet_global_params");
  });

  it("finalize with a stale plan is blocked until the cycle settles", async () => {
    const baseUrl = inject("baseUrl") as string;
    const token = inject("depositorToken") as string;
    const api = new ApiClient(baseUrl).withToken(token);
    const controller = new BudgetController(api, "county", N, VARIABLES, INITIAL_GLOBALS);

    const editing = controller.addStatistic({
      id: "mean-age",
      kind: "mean",
      variable: "age",
    });
    const blocked = await controller.finalize(); // round still in flight
    expect(blocked.status).toBe(0);
    expect(blocked.error?.reason).toMatch(/stale/);
    await editing;
  });
});
