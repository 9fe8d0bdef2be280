// @vitest-environment jsdom
import { beforeEach, describe, expect, it, vi } from "vitest";
import { ServiceClient } from "../src/api";
import { boot } from "../src/app";
import { resetAnnouncer } from "../src/announcer";
import { FAKE_REPORT, FakeService } from "./fakeservice";

const BASE = "http://fake.test";

let fake: FakeService;
let root: HTMLElement;
let announced: string[];

beforeEach(() => {
  document.body.innerHTML = '<main id="app"></main>';
  resetAnnouncer();
  fake = new FakeService();
  vi.stubGlobal("fetch", vi.fn(fake.handler));
  root = document.getElementById("app")!;
  announced = [];
});

function mount() {
  return boot(root, new ServiceClient(BASE), (m) => announced.push(m));
}

function clickButton(label: string): void {
  const target = [...root.querySelectorAll("button")].find(
    (b) => b.textContent === label,
  );
  expect(target, `button "${label}"`).toBeDefined();
  target!.click();
}

function capturePhoto(): void {
  const input = root.querySelector<HTMLInputElement>("#photo-input");
  expect(input).not.toBeNull();
  const file = new File([new Uint8Array([1, 2, 3])], "photo.png", {
    type: "image/png",
  });
  Object.defineProperty(input!, "files", {
    value: [file] as unknown as FileList,
    configurable: true,
  });
  input!.dispatchEvent(new Event("change"));
}

async function atScreen(name: string): Promise<void> {
  await vi.waitFor(() => {
    expect(root.dataset.screen).toBe(name);
    expect(
      [...root.querySelectorAll("button, input")].every(
        (el) => !(el as HTMLButtonElement).disabled,
      ),
    ).toBe(true);
  });
}

describe("capture screen", () => {
  it("renders a labelled file input limited to PNG and JPEG", async () => {
    mount();
    await atScreen("Capture");
    const input = root.querySelector<HTMLInputElement>("#photo-input")!;
    expect(input.accept).toBe("image/png,image/jpeg");
    expect(input.getAttribute("capture")).toBe("environment");
    const label = root.querySelector<HTMLLabelElement>("label.capture-label")!;
    expect(label.htmlFor).toBe("photo-input");
  });

  it("moves focus to the screen heading", async () => {
    mount();
    await atScreen("Capture");
    expect(document.activeElement?.tagName).toBe("H2");
    expect(document.activeElement?.textContent).toBe("Take a photo");
  });
});

describe("quality screen", () => {
  it("shows the server verdict verbatim with the three choices", async () => {
    mount();
    await atScreen("Capture");
    capturePhoto();
    await atScreen("Quality");
    expect(root.querySelector(".quality-verdict")?.textContent).toBe(
      "Picture quality is Good.",
    );
    expect(root.querySelector(".quality-number")?.textContent).toBe(
      "Score 62.5 out of 100",
    );
    const labels = [...root.querySelectorAll(".choices button")].map(
      (b) => b.textContent,
    );
    expect(labels).toEqual(["Save photo", "Get distortion feedback", "Retake"]);
    expect(announced).toContain("Picture quality is Good.");
  });

  it("disables every control while a request is in flight", async () => {
    mount();
    await atScreen("Capture");
    capturePhoto();
    await atScreen("Quality");

    let release!: () => void;
    const gate = new Promise<void>((resolve) => (release = resolve));
    const gated = vi.fn(async (input: RequestInfo | URL, init?: RequestInit) => {
      await gate;
      return fake.handler(input, init);
    });
    vi.stubGlobal("fetch", gated);

    clickButton("Save photo");
    await vi.waitFor(() => {
      const buttons = [...root.querySelectorAll("button")];
      expect(buttons.length).toBeGreaterThan(0);
      expect(buttons.every((b) => b.disabled)).toBe(true);
    });
    release();
    await atScreen("Saved");
    expect(gated).toHaveBeenCalledTimes(1);
  });
});

describe("distortion screen", () => {
  async function reachDistortion() {
    mount();
    await atScreen("Capture");
    capturePhoto();
    await atScreen("Quality");
    clickButton("Get distortion feedback");
    await atScreen("Distortion");
  }

  it("renders the ranked list verbatim, worst first", async () => {
    await reachDistortion();
    const items = [...root.querySelectorAll(".ranked-list li")];
    expect(items.map((li) => (li as HTMLElement).dataset.category)).toEqual([
      "blurry",
      "bright",
    ]);
    expect(items[0].querySelector(".ranked-message")?.textContent).toBe(
      FAKE_REPORT.ranked[0].message,
    );
    expect(items[0].querySelector(".severity")?.textContent).toBe("High");
    expect(
      items[1].querySelector(".severity")?.classList.contains(
        "severity-moderate",
      ),
    ).toBe(true);
    expect(announced).toContain(FAKE_REPORT.messages.join(" "));
  });

  it("marks exactly the server's localized regions in the 3x3 overlay", async () => {
    await reachDistortion();
    const flagged = [...root.querySelectorAll(".region-flagged")].map(
      (c) => (c as HTMLElement).dataset.region,
    );
    expect(flagged).toEqual(["top-left", "center"]);
    const silent = root.querySelector('[data-region="bottom-right"]')!;
    expect(silent.getAttribute("aria-hidden")).toBe("true");
    expect(
      root
        .querySelector('[data-region="top-left"]')
        ?.getAttribute("aria-label"),
    ).toBe("blurry in top-left");
  });

  it("toggles the tile quality map fetched from the predict endpoint", async () => {
    await reachDistortion();
    expect(root.querySelector(".quality-map")).toBeNull();
    clickButton("Show quality map");
    await vi.waitFor(() => {
      expect(root.querySelector(".quality-map")).not.toBeNull();
    });
    expect(root.querySelectorAll(".quality-map-cell")).toHaveLength(4);
    expect(fake.predictCalls).toBe(1);
    clickButton("Hide quality map");
    await vi.waitFor(() => {
      expect(root.querySelector(".quality-map")).toBeNull();
    });
  });

  it("offers Save and Retake but no second feedback button", async () => {
    await reachDistortion();
    const labels = [...root.querySelectorAll(".choices button")].map(
      (b) => b.textContent,
    );
    expect(labels).toEqual(["Save photo", "Retake"]);
  });
});

describe("saved screen", () => {
  it("lists the attempt history and starts a fresh session", async () => {
    const store = mount();
    await atScreen("Capture");
    capturePhoto();
    await atScreen("Quality");
    clickButton("Retake");
    await atScreen("Capture");
    expect(root.querySelector("p")?.textContent).toContain("Attempt 2");
    capturePhoto();
    await atScreen("Quality");
    clickButton("Save photo");
    await atScreen("Saved");

    expect(root.querySelector(".saved-message")?.textContent).toBe(
      "Photo saved.",
    );
    const history = [...root.querySelectorAll(".history-list li")].map(
      (li) => li.textContent,
    );
    expect(history).toEqual([
      "Good, score 62.5",
      "Good, score 62.5 (saved)",
    ]);
    expect(announced).toContain("Photo saved.");

    clickButton("New photo");
    await atScreen("Capture");
    expect(store.getState().sessionId).toBe("fake2");
    expect(root.querySelectorAll(".history-list li")).toHaveLength(0);
  });
});

describe("error banner", () => {
  it("shows the service error with a working retry", async () => {
    mount();
    await atScreen("Capture");
    capturePhoto();
    await atScreen("Quality");

    fake.failNextWith = 503;
    clickButton("Save photo");
    await vi.waitFor(() => {
      expect(root.querySelector(".error-banner")).not.toBeNull();
    });
    const banner = root.querySelector(".error-banner")!;
    expect(banner.getAttribute("role")).toBe("alert");
    expect(banner.textContent).toContain("injected failure");
    expect(root.dataset.screen).toBe("Quality");

    clickButton("Retry");
    await atScreen("Saved");
    expect(root.querySelector(".error-banner")).toBeNull();
  });
});

describe("keyboard operability", () => {
  it("uses only native interactive elements", async () => {
    mount();
    await atScreen("Capture");
    capturePhoto();
    await atScreen("Quality");
    clickButton("Get distortion feedback");
    await atScreen("Distortion");
    expect(root.querySelectorAll('div[role="button"], [onclick]')).toHaveLength(0);
    for (const el of root.querySelectorAll("button")) {
      expect(el.tagName).toBe("BUTTON");
      expect((el as HTMLButtonElement).type).toBe("button");
    }
  });
});
