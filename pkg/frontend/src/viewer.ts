/**
 * Release viewer: renders a metadata document as HTML with confidence
 * intervals around every released value. Kept DOM-free (string output) so
 * it runs in tests and on any page.
 */

import type { MetadataDocument, ReleaseRecord } from "./types.js";

function esc(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;");
}

function fmt(value: number, digits = 4): string {
  return Number(value.toPrecision(digits)).toString();
}

function scalarRow(record: ReleaseRecord): string {
  const value = record.value as number;
  const lo = value - record.accuracy;
  const hi = value + record.accuracy;
  const confidence = Math.round((1 - record.alpha) * 100);
  return (
    `<div class="release scalar" data-record="${esc(record.record_id)}">` +
    `<span class="label">${esc(record.statistic)} of ${esc(record.variable)}</span>` +
    `<span class="value">${fmt(value)}</span>` +
    `<span class="ci">${confidence}% CI [${fmt(lo)}, ${fmt(hi)}]</span>` +
    `</div>`
  );
}

function vectorRows(record: ReleaseRecord): string {
  const values = record.value as number[];
  const labels =
    (record.payload["labels"] as string[] | undefined) ??
    (record.payload["grid"] as number[] | undefined)?.map((g) => fmt(g)) ??
    values.map((_, i) => `#${i}`);
  const confidence = Math.round((1 - record.alpha) * 100);
  const bars = values
    .map((v, i) => {
      const lo = Math.max(v - record.accuracy, 0);
      const hi = v + record.accuracy;
      return (
        `<li><span class="bin">${esc(String(labels[i]))}</span>` +
        `<span class="value">${fmt(v)}</span>` +
        `<span class="ci">[${fmt(lo)}, ${fmt(hi)}]</span></li>`
      );
    })
    .join("");
  return (
    `<div class="release vector" data-record="${esc(record.record_id)}">` +
    `<span class="label">${esc(record.statistic)} of ${esc(record.variable)} ` +
    `(per-entry ${confidence}% CI)</span><ul>${bars}</ul></div>`
  );
}

export function renderRelease(record: ReleaseRecord): string {
  return Array.isArray(record.value) ? vectorRows(record) : scalarRow(record);
}

export function renderMetadata(doc: MetadataDocument): string {
  const header =
    `<header><h2>${esc(doc.dataset_id)}</h2>` +
    `<p>n = ${doc.n}, audience: ${esc(doc.audience)}</p></header>`;
  const variables = doc.variables
    .map((v) => {
      const domain =
        v.kind === "categorical"
          ? (v.categories ?? []).join(", ")
          : `[${v.lower}, ${v.upper}]`;
      return `<li>${esc(v.name)} (${esc(v.kind)}): ${esc(domain)}</li>`;
    })
    .join("");
  const releases = doc.releases.map(renderRelease).join("");
  return (
    `<article class="metadata">${header}` +
    `<section class="variables"><ul>${variables}</ul></section>` +
    `<section class="releases">${releases}</section></article>`
  );
}
