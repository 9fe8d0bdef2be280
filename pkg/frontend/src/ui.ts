/**
 * Screen rendering. One function re-renders the whole app from state;
 * every user-visible feedback string comes verbatim from the service.
 */

import { AppState } from "./state";
import { buildQualityMap, buildRegionOverlay } from "./overlay";

export interface Actions {
  onCapture: (file: File) => void;
  onRequestFeedback: () => void;
  onSave: () => void;
  onRetake: () => void;
  onToggleMap: () => void;
  onRetry: () => void;
  onNewSession: () => void;
}

function button(
  label: string,
  onClick: () => void,
  disabled: boolean,
): HTMLButtonElement {
  const b = document.createElement("button");
  b.type = "button";
  b.textContent = label;
  b.disabled = disabled;
  b.addEventListener("click", onClick);
  return b;
}

function heading(text: string): HTMLHeadingElement {
  const h = document.createElement("h2");
  h.textContent = text;
  h.tabIndex = -1;
  return h;
}

function errorBanner(state: AppState, actions: Actions): HTMLElement | null {
  if (!state.error) return null;
  const banner = document.createElement("div");
  banner.className = "error-banner";
  banner.setAttribute("role", "alert");
  const text = document.createElement("span");
  text.textContent = state.error;
  banner.appendChild(text);
  banner.appendChild(button("Retry", actions.onRetry, state.busy));
  return banner;
}

function captureScreen(state: AppState, actions: Actions): HTMLElement {
  const section = document.createElement("section");
  section.appendChild(heading("Take a photo"));
  const p = document.createElement("p");
  p.textContent =
    state.attempts > 0
      ? `Attempt ${state.attempts + 1}. Choose or capture a photo to check its quality.`
      : "Choose or capture a photo to check its quality.";
  section.appendChild(p);

  const label = document.createElement("label");
  label.className = "capture-label";
  label.textContent = "Photo";
  const input = document.createElement("input");
  input.type = "file";
  input.accept = "image/png,image/jpeg";
  input.setAttribute("capture", "environment");
  input.id = "photo-input";
  input.disabled = state.busy;
  input.addEventListener("change", () => {
    const file = input.files && input.files[0];
    if (file) actions.onCapture(file);
  });
  label.htmlFor = input.id;
  section.appendChild(label);
  section.appendChild(input);
  return section;
}

function choiceButtons(state: AppState, actions: Actions): HTMLElement {
  const row = document.createElement("div");
  row.className = "choices";
  row.appendChild(button("Save photo", actions.onSave, state.busy));
  if (state.screen === "Quality") {
    row.appendChild(
      button("Get distortion feedback", actions.onRequestFeedback, state.busy),
    );
  }
  row.appendChild(button("Retake", actions.onRetake, state.busy));
  return row;
}

function qualityScreen(state: AppState, actions: Actions): HTMLElement {
  const section = document.createElement("section");
  section.appendChild(heading("Picture quality"));
  const verdict = document.createElement("p");
  verdict.className = "quality-verdict";
  verdict.textContent = state.message ?? "";
  section.appendChild(verdict);
  if (state.quality !== null) {
    const detail = document.createElement("p");
    detail.className = "quality-number";
    detail.textContent = `Score ${state.quality.toFixed(1)} out of 100`;
    section.appendChild(detail);
  }
  section.appendChild(choiceButtons(state, actions));
  return section;
}

function distortionScreen(state: AppState, actions: Actions): HTMLElement {
  const section = document.createElement("section");
  section.appendChild(heading("Distortion feedback"));

  const report = state.report;
  if (report) {
    const list = document.createElement("ol");
    list.className = "ranked-list";
    for (const entry of report.ranked) {
      const li = document.createElement("li");
      li.dataset.category = entry.category;
      const severity = document.createElement("span");
      severity.className = `severity severity-${entry.severity.toLowerCase()}`;
      severity.textContent = entry.severity;
      const message = document.createElement("span");
      message.className = "ranked-message";
      message.textContent = entry.message;
      li.appendChild(severity);
      li.appendChild(document.createTextNode(" "));
      li.appendChild(message);
      list.appendChild(li);
    }
    section.appendChild(list);

    const figure = document.createElement("figure");
    figure.className = "photo-figure";
    if (state.imageUrl) {
      const img = document.createElement("img");
      img.src = state.imageUrl;
      img.alt = "Your photo";
      figure.appendChild(img);
    }
    figure.appendChild(buildRegionOverlay(report.localized));
    if (state.showMap && state.grid) {
      figure.appendChild(buildQualityMap(state.grid));
    }
    section.appendChild(figure);

    section.appendChild(
      button(
        state.showMap ? "Hide quality map" : "Show quality map",
        actions.onToggleMap,
        state.busy,
      ),
    );
  }

  section.appendChild(choiceButtons(state, actions));
  return section;
}

function savedScreen(state: AppState, actions: Actions): HTMLElement {
  const section = document.createElement("section");
  section.appendChild(heading("Saved"));
  const msg = document.createElement("p");
  msg.className = "saved-message";
  msg.textContent = state.message ?? "";
  section.appendChild(msg);

  const historyTitle = document.createElement("h3");
  historyTitle.textContent = "Attempts";
  section.appendChild(historyTitle);
  const list = document.createElement("ol");
  list.className = "history-list";
  for (const attempt of state.history) {
    const li = document.createElement("li");
    li.textContent = `${attempt.bucket}, score ${attempt.quality.toFixed(1)}${
      attempt.saved ? " (saved)" : ""
    }`;
    list.appendChild(li);
  }
  section.appendChild(list);

  section.appendChild(button("New photo", actions.onNewSession, state.busy));
  return section;
}

export function render(
  root: HTMLElement,
  state: AppState,
  actions: Actions,
): void {
  const screenChanged = root.dataset.screen !== state.screen;
  // Full re-render drops focus; remember where it was to put it back.
  const active = document.activeElement as HTMLElement | null;
  const prevFocus =
    active && root.contains(active)
      ? { tag: active.tagName, id: active.id, text: active.textContent }
      : null;

  root.dataset.screen = state.screen;
  root.dataset.serverState = state.serverState;
  root.textContent = "";

  const banner = errorBanner(state, actions);
  if (banner) root.appendChild(banner);

  let section: HTMLElement;
  switch (state.screen) {
    case "Capture":
      section = captureScreen(state, actions);
      break;
    case "Quality":
      section = qualityScreen(state, actions);
      break;
    case "Distortion":
      section = distortionScreen(state, actions);
      break;
    case "Saved":
      section = savedScreen(state, actions);
      break;
  }
  root.appendChild(section);

  const h2 = section.querySelector("h2") as HTMLElement | null;
  if (screenChanged) {
    h2?.focus();
    return;
  }
  if (!prevFocus) return;
  let next: HTMLElement | null = null;
  if (prevFocus.id) {
    next = root.querySelector(`#${prevFocus.id}`);
  } else if (prevFocus.tag === "BUTTON") {
    next =
      [...root.querySelectorAll("button")].find(
        (b) => b.textContent === prevFocus.text,
      ) ?? null;
  } else if (prevFocus.tag === "H2") {
    next = h2;
  }
  next?.focus();
}
