/**
 * Client-side session store. Holds exactly what the server said plus
 * view bookkeeping; the guided state itself always mirrors the service
 * (serverState/attempts are overwritten by every response).
 */

import {
  FeedbackReport,
  GridPayload,
  GuidedEvent,
  ServiceClient,
  ServiceError,
} from "./api";

export type ScreenName = "Capture" | "Quality" | "Distortion" | "Saved";

export interface AttemptRecord {
  quality: number;
  bucket: string;
  saved: boolean;
}

export interface AppState {
  sessionId: string | null;
  serverState: string;
  screen: ScreenName;
  attempts: number;
  quality: number | null;
  bucket: string | null;
  message: string | null;
  report: FeedbackReport | null;
  grid: GridPayload | null;
  showMap: boolean;
  imageUrl: string | null;
  busy: boolean;
  error: string | null;
  history: AttemptRecord[];
}

const SCREEN_FOR_STATE: Record<string, ScreenName> = {
  AwaitCapture: "Capture",
  QualityShown: "Quality",
  DistortionShown: "Distortion",
  Saved: "Saved",
};

export const MAP_TILE = 32;

function initialState(): AppState {
  return {
    sessionId: null,
    serverState: "AwaitCapture",
    screen: "Capture",
    attempts: 0,
    quality: null,
    bucket: null,
    message: null,
    report: null,
    grid: null,
    showMap: false,
    imageUrl: null,
    busy: false,
    error: null,
    history: [],
  };
}

type Listener = (state: AppState) => void;

export class Store {
  private state: AppState = initialState();
  private listeners: Listener[] = [];
  private lastImage: Blob | null = null;
  private retry: (() => Promise<void>) | null = null;

  constructor(
    private client: ServiceClient,
    private announce: (message: string) => void = () => {},
  ) {}

  getState(): AppState {
    return this.state;
  }

  subscribe(fn: Listener): () => void {
    this.listeners.push(fn);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== fn);
    };
  }

  private set(patch: Partial<AppState>): void {
    this.state = { ...this.state, ...patch };
    if (patch.serverState !== undefined) {
      this.state.screen =
        SCREEN_FOR_STATE[patch.serverState] ?? this.state.screen;
    }
    for (const fn of this.listeners) fn(this.state);
  }

  /** Wrap one service round trip: busy flag, error banner, retry slot. */
  private async run(action: () => Promise<void>): Promise<void> {
    if (this.state.busy) return;
    this.retry = action;
    this.set({ busy: true, error: null });
    try {
      await action();
      this.set({ busy: false });
    } catch (err) {
      const message =
        err instanceof ServiceError
          ? err.message
          : "Could not reach the quality service.";
      this.set({ busy: false, error: message });
    }
  }

  async retryLast(): Promise<void> {
    const action = this.retry;
    if (action) await this.run(action);
  }

  /** Create the tab's session (also used for "new photo" after save). */
  async start(): Promise<void> {
    await this.run(async () => {
      const sessionId = await this.client.createSession();
      const fresh = initialState();
      this.lastImage = null;
      this.set({ ...fresh, sessionId });
    });
  }

  async capture(image: Blob): Promise<void> {
    await this.run(async () => {
      const out = await this.sendMirrored("capture", image);
      this.lastImage = image;
      const imageUrl =
        typeof URL.createObjectURL === "function"
          ? URL.createObjectURL(image)
          : null;
      this.set({
        quality: out.quality ?? null,
        bucket: out.bucket ?? null,
        message: out.message ?? null,
        report: null,
        grid: null,
        showMap: false,
        imageUrl,
        history: [
          ...this.state.history,
          { quality: out.quality ?? 0, bucket: out.bucket ?? "", saved: false },
        ],
      });
      if (out.message) this.announce(out.message);
    });
  }

  async requestFeedback(): Promise<void> {
    await this.run(async () => {
      const out = await this.sendMirrored("request_distortion_feedback");
      this.set({ report: out.report ?? null });
      if (out.report) this.announce(out.report.messages.join(" "));
    });
  }

  async save(): Promise<void> {
    await this.run(async () => {
      const out = await this.sendMirrored("save");
      const history = this.state.history.map((h, i) =>
        i === this.state.history.length - 1 ? { ...h, saved: true } : h,
      );
      this.set({ message: out.message ?? null, history });
      if (out.message) this.announce(out.message);
    });
  }

  async retake(): Promise<void> {
    await this.run(async () => {
      await this.sendMirrored("retake");
      this.lastImage = null;
      this.set({
        quality: null,
        bucket: null,
        message: null,
        report: null,
        grid: null,
        showMap: false,
        imageUrl: null,
      });
    });
  }

  /** Distortion-screen map toggle; grid fetched once per capture. */
  async toggleMap(): Promise<void> {
    if (this.state.showMap) {
      this.set({ showMap: false });
      return;
    }
    if (this.state.grid) {
      this.set({ showMap: true });
      return;
    }
    const image = this.lastImage;
    if (!image) return;
    await this.run(async () => {
      const result = await this.client.predict(image, MAP_TILE);
      this.set({ grid: result.grid ?? null, showMap: true });
    });
  }

  /** Re-read the server's session snapshot into the mirror. */
  async refresh(): Promise<void> {
    const id = this.state.sessionId;
    if (!id) return;
    const snap = await this.client.getSession(id);
    this.set({ serverState: snap.state, attempts: snap.attempts });
  }

  private async sendMirrored(event: GuidedEvent, image?: Blob) {
    const id = this.state.sessionId;
    if (!id) throw new ServiceError(0, "no active session");
    const out = await this.client.sendEvent(id, event, image);
    this.set({
      serverState: out.state,
      attempts: out.attempts ?? this.state.attempts,
    });
    return out;
  }
}
