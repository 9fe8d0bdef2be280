// @vitest-environment jsdom
import { describe, expect, it } from "vitest";
import {
  REGION_ORDER,
  buildQualityMap,
  buildRegionOverlay,
  qualityColor,
  regionIndex,
} from "../src/overlay";

describe("regionIndex", () => {
  it("orders regions row-major, top-left first", () => {
    expect(regionIndex("top-left")).toBe(0);
    expect(regionIndex("center")).toBe(4);
    expect(regionIndex("bottom-right")).toBe(8);
    expect(regionIndex("nowhere")).toBe(-1);
  });
});

describe("buildRegionOverlay", () => {
  it("renders nine cells and hides the unflagged ones from readers", () => {
    const overlay = buildRegionOverlay([]);
    const cells = overlay.querySelectorAll(".region-cell");
    expect(cells).toHaveLength(9);
    expect(
      [...cells].map((c) => (c as HTMLElement).dataset.region),
    ).toEqual([...REGION_ORDER]);
    for (const cell of cells) {
      expect(cell.getAttribute("aria-hidden")).toBe("true");
    }
  });

  it("groups multiple categories flagged in one region", () => {
    const overlay = buildRegionOverlay([
      { category: "blurry", region: "center" },
      { category: "dark", region: "center" },
    ]);
    const cell = overlay.querySelector('[data-region="center"]')!;
    expect(cell.classList.contains("region-flagged")).toBe(true);
    expect(cell.querySelector(".region-label")?.textContent).toBe(
      "blurry, dark",
    );
    expect(cell.getAttribute("aria-label")).toBe(
      "blurry in center; dark in center",
    );
  });
});

describe("qualityColor", () => {
  it("runs green for high quality and red for low", () => {
    expect(qualityColor(100)).toBe("rgba(0,190,40,0.55)");
    expect(qualityColor(0)).toBe("rgba(220,0,40,0.55)");
  });

  it("clamps out-of-range values", () => {
    expect(qualityColor(150)).toBe(qualityColor(100));
    expect(qualityColor(-5)).toBe(qualityColor(0));
  });
});

describe("buildQualityMap", () => {
  it("renders one colored cell per tile in grid order", () => {
    const el = buildQualityMap({
      N: 32,
      quality: [
        [90, 10],
        [50, 70],
      ],
      distortions: {},
    });
    const cells = el.querySelectorAll(".quality-map-cell");
    expect(cells).toHaveLength(4);
    expect(el.style.gridTemplateColumns).toBe("repeat(2, 1fr)");
    expect((cells[0] as HTMLElement).title).toBe("90.0");
    const probe = document.createElement("div");
    probe.style.backgroundColor = qualityColor(10);
    expect((cells[1] as HTMLElement).style.backgroundColor).toBe(
      probe.style.backgroundColor,
    );
  });
});
