/**
 * Screen-reader announcements via a visually hidden ARIA live region.
 * Every feedback message the service sends is funneled through announce().
 */

let liveEl: HTMLElement | null = null;

export function initAnnouncer(): HTMLElement {
  const existing = document.getElementById("sr-announcements");
  if (existing) {
    liveEl = existing;
    return existing;
  }
  const el = document.createElement("div");
  el.id = "sr-announcements";
  el.setAttribute("role", "status");
  el.setAttribute("aria-live", "polite");
  el.setAttribute("aria-atomic", "true");
  el.className = "sr-only";
  document.body.appendChild(el);
  liveEl = el;
  return el;
}

export function announce(message: string): void {
  if (!liveEl) initAnnouncer();
  if (!liveEl) return;
  // Clear first so repeating the same text is still announced.
  liveEl.textContent = "";
  const el = liveEl;
  setTimeout(() => {
    el.textContent = message;
  }, 50);
}

/** Test hook: forget the cached element. */
export function resetAnnouncer(): void {
  liveEl = null;
}
