/**
 * Typed client for the quality service. Every UI network call goes
 * through here; the rest of the app never touches fetch directly.
 */

export interface HealthInfo {
  status: string;
  model_version: number;
  feature_config: string;
}

export interface GridPayload {
  N: number;
  quality: number[][];
  distortions: Record<string, number[][]>;
}

export interface PredictResult {
  quality: number;
  bucket: string;
  distortions: Record<string, number>;
  grid?: GridPayload;
}

export interface RankedEntry {
  category: string;
  score: number;
  severity: string;
  message: string;
}

export interface LocalizedEntry {
  category: string;
  region: string;
}

export interface FeedbackReport {
  quality: number;
  bucket: string;
  ranked: RankedEntry[];
  messages: string[];
  localized: LocalizedEntry[];
}

export interface SessionSnapshot {
  state: string;
  attempts: number;
  last_quality: number | null;
}

/** Response of POST /sessions/{id}/events; fields depend on the event. */
export interface EventResult {
  state: string;
  quality?: number;
  bucket?: string;
  message?: string;
  report?: FeedbackReport;
  attempts?: number;
}

export type GuidedEvent =
  | "capture"
  | "request_distortion_feedback"
  | "save"
  | "retake";

/** Non-2xx service reply, message taken from the response body. */
export class ServiceError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ServiceError";
  }
}

async function raiseForStatus(resp: Response): Promise<void> {
  if (resp.ok) return;
  let message = `service error ${resp.status}`;
  try {
    const body = await resp.json();
    if (body && typeof body.error === "string") message = body.error;
  } catch {
    // non-JSON body, keep the generic message
  }
  throw new ServiceError(resp.status, message);
}

/** Raw bytes of a blob; FileReader fallback for DOMs without arrayBuffer(). */
export async function blobBytes(blob: Blob): Promise<Uint8Array<ArrayBuffer>> {
  if (typeof blob.arrayBuffer === "function") {
    return new Uint8Array(await blob.arrayBuffer());
  }
  return new Promise((resolve, reject) => {
    const reader = new FileReader();
    reader.onload = () => resolve(new Uint8Array(reader.result as ArrayBuffer));
    reader.onerror = () =>
      reject(reader.error ?? new Error("could not read the image file"));
    reader.readAsArrayBuffer(blob);
  });
}

/** Base64 of the blob's raw bytes (what the events endpoint expects). */
export async function blobToBase64(blob: Blob): Promise<string> {
  const bytes = await blobBytes(blob);
  let binary = "";
  const chunk = 0x8000; // String.fromCharCode argument limit
  for (let i = 0; i < bytes.length; i += chunk) {
    binary += String.fromCharCode(...bytes.subarray(i, i + chunk));
  }
  return btoa(binary);
}

export class ServiceClient {
  constructor(readonly baseUrl: string) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  async health(): Promise<HealthInfo> {
    const resp = await fetch(this.url("/health"));
    await raiseForStatus(resp);
    return resp.json();
  }

  async predict(image: Blob, tile?: number): Promise<PredictResult> {
    const qs = tile === undefined ? "" : `?tile=${tile}`;
    const resp = await fetch(this.url(`/predict${qs}`), {
      method: "POST",
      headers: { "Content-Type": "application/octet-stream" },
      // Bytes, not the Blob itself: works for every Blob implementation.
      body: await blobBytes(image),
    });
    await raiseForStatus(resp);
    return resp.json();
  }

  async createSession(): Promise<string> {
    const resp = await fetch(this.url("/sessions"), { method: "POST" });
    await raiseForStatus(resp);
    const body = await resp.json();
    return body.session_id;
  }

  async getSession(id: string): Promise<SessionSnapshot> {
    const resp = await fetch(this.url(`/sessions/${id}`));
    await raiseForStatus(resp);
    return resp.json();
  }

  async sendEvent(
    id: string,
    event: GuidedEvent,
    image?: Blob,
  ): Promise<EventResult> {
    const payload: { event: GuidedEvent; image?: string } = { event };
    if (image !== undefined) payload.image = await blobToBase64(image);
    const resp = await fetch(this.url(`/sessions/${id}/events`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    await raiseForStatus(resp);
    return resp.json();
  }
}
