/**
 * Session state for the arrow-authoring panel.
 *
 * The session never computes flow values itself: every numeric panel comes
 * back from the service as bytes. Preview requests are debounced, at most
 * one is in flight, and responses carry a token so anything superseded by
 * a newer edit is discarded. A transport failure raises a banner and
 * leaves the session state untouched.
 */

import { ArrowGesture, ArrowSpecDoc, exportSpec, gestureError, importSpec, roundPoint } from "./arrowSpec.js";

export interface FlowPayload {
  width: number;
  height: number;
  flow: string;     // base64 .flo bytes
  preview: string;  // base64 PPM bytes
}

export interface ClipResult {
  frames: string[]; // base64 PPM frames
  report: Record<string, unknown>;
}

export interface TransportResponse {
  status: number;
  json(): Promise<unknown>;
}

export type Transport = (path: string, body: unknown) => Promise<TransportResponse>;

export interface PipelineParams {
  sigma?: number;
  threshold?: number;
  normalization?: string;
  iterations?: number;
  smoothing_weight?: number;
}

export interface SessionOptions {
  width: number;
  height: number;
  transport: Transport;
  debounceMs?: number;
  onChange?: () => void;
}

export class Session {
  readonly width: number;
  readonly height: number;
  gestures: ArrowGesture[] = [];
  globalStrength = 0.1;
  params: PipelineParams = {};
  densePreview: FlowPayload | null = null;
  refinedPreview: FlowPayload | null = null;
  previewsStale = false;
  lastClip: ClipResult | null = null;
  banner: string | null = null;

  private transport: Transport;
  private debounceMs: number;
  private onChange: () => void;
  private nextId = 1;
  private token = 0;
  private clipToken = 0;
  private debounceTimer: ReturnType<typeof setTimeout> | null = null;
  private inFlight = false;
  private rerunAfterFlight = false;
  private waiters: (() => void)[] = [];

  constructor(options: SessionOptions) {
    this.width = options.width;
    this.height = options.height;
    this.transport = options.transport;
    this.debounceMs = options.debounceMs ?? 250;
    this.onChange = options.onChange ?? (() => {});
  }

  /** Add a gesture; returns an error string (gesture blocked) or null. */
  addGesture(start: [number, number], end: [number, number], strength: number): string | null {
    const candidate = { start: roundPoint(start), end: roundPoint(end), strength };
    const problem = gestureError(candidate, this.width, this.height, this.gestures);
    if (problem) return problem;
    this.gestures.push({ id: this.nextId++, ...candidate });
    this.edited();
    return null;
  }

  removeGesture(id: number): void {
    const before = this.gestures.length;
    this.gestures = this.gestures.filter((g) => g.id !== id);
    if (this.gestures.length !== before) this.edited();
  }

  clearGestures(): void {
    if (this.gestures.length > 0) {
      this.gestures = [];
      this.edited();
    }
  }

  setGlobalStrength(value: number): void {
    if (value >= 0 && value !== this.globalStrength) {
      this.globalStrength = value;
      this.edited();
    }
  }

  setParams(params: PipelineParams): void {
    this.params = { ...this.params, ...params };
    this.edited();
  }

  exportSpec(): ArrowSpecDoc {
    return exportSpec(this.width, this.height, this.globalStrength, this.gestures);
  }

  /** Replace the gesture list from an arrow-spec document (lossless). */
  importSpecDoc(doc: unknown): void {
    const parsed = importSpec(doc);
    if (parsed.width !== this.width || parsed.height !== this.height) {
      throw new Error(
        `spec is ${parsed.width}x${parsed.height}, session image is ${this.width}x${this.height}`,
      );
    }
    this.gestures = parsed.gestures.map((g) => ({ ...g, id: this.nextId++ }));
    this.globalStrength = parsed.globalStrength;
    this.edited();
  }

  /** Resolves once no preview request is pending or in flight. */
  settled(): Promise<void> {
    if (!this.inFlight && this.debounceTimer === null && !this.rerunAfterFlight) {
      return Promise.resolve();
    }
    return new Promise((resolve) => this.waiters.push(resolve));
  }

  get hasInFlightPreview(): boolean {
    return this.inFlight;
  }

  private edited(): void {
    this.previewsStale = true;
    this.token++;
    this.schedulePreview();
    this.onChange();
  }

  private schedulePreview(): void {
    if (this.debounceTimer !== null) clearTimeout(this.debounceTimer);
    this.debounceTimer = setTimeout(() => {
      this.debounceTimer = null;
      void this.firePreview();
    }, this.debounceMs);
  }

  private async firePreview(): Promise<void> {
    if (this.inFlight) {
      this.rerunAfterFlight = true;
      return;
    }
    this.inFlight = true;
    const token = this.token;
    const body = { ...this.exportSpec(), params: this.paramsBody() };
    try {
      const [dense, refined] = await Promise.all([
        this.post("/flow/dense", body),
        this.post("/flow/refine", body),
      ]);
      if (token === this.token) {
        this.densePreview = dense as FlowPayload;
        this.refinedPreview = refined as FlowPayload;
        this.previewsStale = false;
        this.banner = null;
      }
      // a stale response (token moved on) is silently discarded
    } catch (err) {
      if (token === this.token) {
        this.banner = `service unreachable: ${String(err)}`;
      }
    } finally {
      this.inFlight = false;
      if (this.rerunAfterFlight) {
        this.rerunAfterFlight = false;
        void this.firePreview();
      } else {
        this.notifySettled();
      }
      this.onChange();
    }
  }

  async requestClip(seed: number, frames: number): Promise<ClipResult | null> {
    this.clipToken++;
    const token = this.clipToken;
    try {
      const result = await this.post("/sample", {
        spec: this.exportSpec(),
        seed,
        frames,
        params: this.paramsBody(),
      });
      if (token === this.clipToken) {
        this.lastClip = result as ClipResult;
        this.banner = null;
        this.onChange();
        return this.lastClip;
      }
      return null;
    } catch (err) {
      if (token === this.clipToken) {
        this.banner = this.describeClipError(err);
        this.onChange();
      }
      return null;
    }
  }

  private describeClipError(err: unknown): string {
    if (err instanceof ServiceError && err.status === 409) {
      return "train a model first: the service has no weights loaded";
    }
    return `service unreachable: ${String(err)}`;
  }

  private paramsBody(): Record<string, number | string> {
    const body: Record<string, number | string> = {};
    for (const [key, value] of Object.entries(this.params)) {
      if (value !== undefined) body[key] = value;
    }
    return body;
  }

  private async post(path: string, body: unknown): Promise<unknown> {
    const response = await this.transport(path, body);
    const payload = (await response.json()) as Record<string, unknown>;
    if (response.status !== 200) {
      throw new ServiceError(response.status, String(payload?.error ?? response.status));
    }
    return payload;
  }

  private notifySettled(): void {
    if (this.debounceTimer === null && !this.inFlight && !this.rerunAfterFlight) {
      const waiters = this.waiters;
      this.waiters = [];
      for (const resolve of waiters) resolve();
    }
  }
}

export class ServiceError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export function fetchTransport(baseUrl: string): Transport {
  return async (path, body) => {
    const response = await fetch(baseUrl + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    return { status: response.status, json: () => response.json() };
  };
}
