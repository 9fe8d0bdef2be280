/**
 * Visual helpers for the distortion screen: the 3x3 localized-phrase
 * overlay and a color scale for the tile quality map.
 */

import { GridPayload, LocalizedEntry } from "./api";

export const REGION_ORDER = [
  "top-left",
  "top-center",
  "top-right",
  "center-left",
  "center",
  "center-right",
  "bottom-left",
  "bottom-center",
  "bottom-right",
] as const;

export function regionIndex(region: string): number {
  return REGION_ORDER.indexOf(region as (typeof REGION_ORDER)[number]);
}

/**
 * 3x3 grid of cells over the photo; each cell lists the categories the
 * server localized there, verbatim.
 */
export function buildRegionOverlay(localized: LocalizedEntry[]): HTMLElement {
  const grid = document.createElement("div");
  grid.className = "region-overlay";
  grid.setAttribute("role", "list");
  grid.setAttribute("aria-label", "Problem areas");
  for (const region of REGION_ORDER) {
    const cell = document.createElement("div");
    cell.className = "region-cell";
    cell.dataset.region = region;
    const here = localized.filter((l) => l.region === region);
    if (here.length > 0) {
      cell.classList.add("region-flagged");
      cell.setAttribute("role", "listitem");
      const label = document.createElement("span");
      label.className = "region-label";
      label.textContent = here.map((l) => l.category).join(", ");
      cell.appendChild(label);
      cell.setAttribute(
        "aria-label",
        here.map((l) => `${l.category} in ${l.region}`).join("; "),
      );
    } else {
      cell.setAttribute("aria-hidden", "true");
    }
    grid.appendChild(cell);
  }
  return grid;
}

/** Green-to-red scale for a 0..100 quality value. */
export function qualityColor(value: number): string {
  const v = Math.max(0, Math.min(100, value)) / 100;
  const red = Math.round(220 * (1 - v));
  const green = Math.round(190 * v);
  return `rgba(${red},${green},40,0.55)`;
}

/** Tile map as a CSS grid of colored cells, one per tile. */
export function buildQualityMap(grid: GridPayload): HTMLElement {
  const rows = grid.quality.length;
  const cols = rows > 0 ? grid.quality[0].length : 0;
  const el = document.createElement("div");
  el.className = "quality-map";
  el.setAttribute("role", "img");
  el.setAttribute("aria-label", "Quality map, greener tiles are better");
  el.style.gridTemplateColumns = `repeat(${cols}, 1fr)`;
  for (let r = 0; r < rows; r++) {
    for (let c = 0; c < cols; c++) {
      const cell = document.createElement("div");
      cell.className = "quality-map-cell";
      cell.style.backgroundColor = qualityColor(grid.quality[r][c]);
      cell.title = grid.quality[r][c].toFixed(1);
      el.appendChild(cell);
    }
  }
  return el;
}
