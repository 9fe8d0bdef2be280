/**
 * Wires client, store, announcer, and renderer together. Kept apart
 * from main.ts so tests can boot the app without import side effects.
 */

import { ServiceClient } from "./api";
import { announce, initAnnouncer } from "./announcer";
import { Actions, render } from "./ui";
import { Store } from "./state";

export function boot(
  root: HTMLElement,
  client: ServiceClient,
  announceFn: (message: string) => void = announce,
): Store {
  initAnnouncer();
  const store = new Store(client, announceFn);
  const actions: Actions = {
    onCapture: (file) => void store.capture(file),
    onRequestFeedback: () => void store.requestFeedback(),
    onSave: () => void store.save(),
    onRetake: () => void store.retake(),
    onToggleMap: () => void store.toggleMap(),
    onRetry: () => void store.retryLast(),
    onNewSession: () => void store.start(),
  };
  store.subscribe((state) => render(root, state, actions));
  render(root, store.getState(), actions);
  void store.start();
  return store;
}
