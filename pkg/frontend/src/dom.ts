/**
 * Browser wiring for the budgeting page: three panels (variables on the
 * left, metadata in the middle, selections with their a priori errors on
 * the right) driven by the BudgetController. Every widget change triggers
 * one repartition round; the table always shows the latest server answer.
 */

import { ApiClient } from "./api.js";
import { BudgetController } from "./controller.js";
import { renderMetadata } from "./viewer.js";
import type { BudgetPageState, StatisticKind, VariableEntry } from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  if (text) node.textContent = text;
  return node;
}

function fmt(value: number | undefined): string {
  return value === undefined ? "" : Number(value.toPrecision(5)).toString();
}

export interface AppConfig {
  baseUrl: string;
  datasetId: string;
  n: number;
  variables: VariableEntry[];
  depositorToken: string;
}

export function mountBudgetPage(root: HTMLElement, config: AppConfig): BudgetController {
  const api = new ApiClient(config.baseUrl).withToken(config.depositorToken);
  const controller = new BudgetController(
    api,
    config.datasetId,
    config.n,
    config.variables,
    { epsilon: 0.5, delta: 9.5367431640625e-7 },
  );

  const left = el("aside", { class: "panel variables" });
  const middle = el("section", { class: "panel metadata-form" });
  const right = el("section", { class: "panel selections" });
  const viewer = el("section", { class: "panel viewer" });
  root.append(left, middle, right, viewer);

  // left panel: variables with per-kind add buttons
  left.append(el("h3", {}, "Variables"));
  for (const variable of config.variables) {
    const row = el("div", { class: "variable" });
    row.append(el("span", {}, `${variable.name} (${variable.kind})`));
    const kinds: StatisticKind[] =
      variable.kind === "categorical"
        ? ["histogram"]
        : ["mean", "histogram", "cdf", "quantile"];
    for (const kind of kinds) {
      const button = el("button", { type: "button" }, `+ ${kind}`);
      button.addEventListener("click", () => {
        void controller
          .addStatistic({ id: `${kind}-${variable.name}`, kind, variable: variable.name })
          .then(refresh);
      });
      row.append(button);
    }
    left.append(row);
  }

  // middle panel: global parameters, secrecy of the sample, confidence
  middle.append(el("h3", {}, "Privacy parameters"));
  const epsInput = el("input", { id: "global-epsilon", value: "0.5" });
  const deltaInput = el("input", { id: "global-delta", value: "9.5367431640625e-7" });
  const deltaError = el("div", { class: "field-error", id: "global-delta-error" });
  const sampleToggle = el("input", { id: "secret-sample", type: "checkbox" });
  const populationInput = el("input", { id: "population", value: String(config.n) });
  const confidenceInput = el("input", { id: "confidence", value: "0.95" });
  const analystInput = el("input", { id: "analyst-epsilon", value: "0" });

  // data-derived values in metadata are a privacy risk, warn up front
  middle.append(
    el("p", { class: "warning" },
       "Enter ranges and population sizes from what you know about the " +
       "world, never values computed from this dataset."),
  );
  for (const [label, input] of [
    ["global epsilon", epsInput],
    ["global delta", deltaInput],
    ["population size (secret sample)", populationInput],
    ["confidence level", confidenceInput],
    ["epsilon reserved for analysts", analystInput],
  ] as const) {
    const field = el("label", {}, label + " ");
    field.append(input);
    middle.append(field);
  }
  const sampleLabel = el("label", {}, "dataset is a secret random sample ");
  sampleLabel.append(sampleToggle);
  middle.append(sampleLabel, deltaError);

  epsInput.addEventListener("change", () => {
    void controller
      .setGlobalParams({
        epsilon: Number(epsInput.value),
        delta: Number(deltaInput.value),
      })
      .then(refresh);
  });
  deltaInput.addEventListener("change", () => {
    void controller
      .setGlobalParams({
        epsilon: Number(epsInput.value),
        delta: Number(deltaInput.value),
      })
      .then(refresh);
  });
  sampleToggle.addEventListener("change", () => {
    void controller
      .setSecretSample(sampleToggle.checked, Number(populationInput.value))
      .then(refresh);
  });
  populationInput.addEventListener("change", () => {
    if (sampleToggle.checked) {
      void controller
        .setSecretSample(true, Number(populationInput.value))
        .then(refresh);
    }
  });
  confidenceInput.addEventListener("change", () => {
    void controller.setConfidenceLevel(Number(confidenceInput.value)).then(refresh);
  });
  analystInput.addEventListener("change", () => {
    void controller.setAnalystEpsilon(Number(analystInput.value)).then(refresh);
  });

  // right panel: the selections table the server keeps rewriting
  right.append(el("h3", {}, "Selected statistics"));
  const table = el("table", { class: "selections-table" });
  const totals = el("p", { class: "totals" });
  const boost = el("p", { class: "sample-boost" });
  const warnings = el("ul", { class: "warnings" });
  const finalize = el("button", { type: "button", id: "finalize" }, "Finalize");
  right.append(table, totals, boost, warnings, finalize);

  finalize.addEventListener("click", () => {
    void controller.finalize().then(async (result) => {
      if (result.status === 200) {
        const metadata = await api.publicMetadata(config.datasetId);
        if (metadata.body) viewer.innerHTML = renderMetadata(metadata.body);
        right.append(el("p", { class: "banner" }, "Releases published."));
      } else {
        right.append(
          el("p", { class: "error" }, result.error?.reason ?? "rejected"),
        );
      }
    });
  });

  function refresh(): void {
    render(controller.page());
  }

  function render(state: BudgetPageState): void {
    table.innerHTML =
      "<tr><th>statistic</th><th>source</th><th>epsilon</th>" +
      "<th>error (±)</th><th>hold</th><th></th></tr>";
    for (const request of state.requests) {
      const row = el("tr", {});
      row.append(
        el("td", {}, request.kind),
        el("td", {}, request.variable ?? request.transform ?? ""),
        el("td", {}, fmt(request.epsilon)),
      );
      const accuracyCell = el("td", {});
      const accuracyInput = el("input", {
        class: "accuracy",
        value: fmt(request.accuracy),
      });
      accuracyInput.addEventListener("change", () => {
        void controller
          .setAccuracy(request.id, Number(accuracyInput.value))
          .then(refresh);
      });
      accuracyCell.append(accuracyInput);
      const holdCell = el("td", {});
      const holdInput = el("input", { type: "checkbox", class: "hold" });
      holdInput.checked = request.hold ?? false;
      holdInput.addEventListener("change", () => {
        void controller.setHold(request.id, holdInput.checked).then(refresh);
      });
      holdCell.append(holdInput);
      const deleteCell = el("td", {});
      const deleteButton = el("button", { type: "button" }, "delete");
      deleteButton.addEventListener("click", () => {
        void controller.deleteStatistic(request.id).then(refresh);
      });
      deleteCell.append(deleteButton);
      row.append(accuracyCell, holdCell, deleteCell);
      table.append(row);
    }
    totals.textContent = state.totals
      ? `composed epsilon ${fmt(state.totals.epsilon_composed)} of ` +
        `${fmt(state.totals.epsilon_budget)} available`
      : "";
    boost.textContent =
      state.sampleBoost > 1
        ? `secrecy-of-the-sample boost: ${fmt(state.sampleBoost)}x`
        : "";
    warnings.innerHTML = "";
    for (const warning of state.warnings) {
      warnings.append(el("li", {}, warning));
    }
    deltaError.textContent = state.fieldErrors["global.delta"] ?? "";
  }

  refresh();
  return controller;
}
