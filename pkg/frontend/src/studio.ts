/**
 * Studio controller: all UI behavior without any DOM.
 *
 * Holds the session, the slider state and the latest-wins relight queue,
 * and notifies the view through callbacks. `main.ts` binds this to the
 * page; tests drive it directly.
 */

import { ApiClient } from "./api.js";
import { LatestWinsQueue } from "./debounce.js";
import { LightingState, N_COEFFS } from "./lighting.js";

export type ViewMode = "relit" | "albedo" | "normals" | "shading" | "side-by-side";

export interface StudioEvents {
  onPreview?: (blob: Blob, lighting: number[]) => void;
  onSession?: (sessionId: string, urls: Record<string, string>) => void;
  onLighting?: (coeffs: number[]) => void;
  onToast?: (message: string) => void;
  onOnline?: (online: boolean) => void;
}

export class StudioController {
  readonly lighting = new LightingState();
  sessionId: string | null = null;
  referenceSessionId: string | null = null;
  viewMode: ViewMode = "relit";
  channelLock = true;
  lastPreview: Blob | null = null;
  lastPreviewLighting: number[] | null = null;
  private estimated: number[] | null = null;
  private queue: LatestWinsQueue<number[]>;

  constructor(private api: ApiClient, private events: StudioEvents = {},
              minIntervalMs = 100) {
    this.queue = new LatestWinsQueue<number[]>(
      (coeffs) => this.doRelight(coeffs), minIntervalMs);
  }

  /** Upload an image (plus optional mask) and populate from its decomposition. */
  async upload(image: Blob, mask?: Blob,
               space: "srgb" | "linear" = "srgb"): Promise<void> {
    try {
      const result = await this.api.decompose(image, mask, space);
      this.sessionId = result.session_id;
      this.estimated = result.lighting.slice();
      this.lighting.setAll(result.lighting);
      this.events.onSession?.(result.session_id, result.urls);
      this.events.onLighting?.(this.lighting.toArray());
      const recon = await this.api.fetchArtifact(result.urls["reconstruction"]);
      this.setPreview(recon, this.lighting.toArray());
      this.events.onOnline?.(true);
    } catch (err) {
      this.report(err);
      throw err;
    }
  }

  /** Slider movement; schedules a latest-wins relight request. */
  setCoefficient(basis: number, channel: number, value: number): void {
    this.lighting.set(basis, channel, value, this.channelLock);
    this.events.onLighting?.(this.lighting.toArray());
    this.requestRelight();
  }

  scaleLighting(factor: number): void {
    this.lighting.scaleAll(factor);
    this.events.onLighting?.(this.lighting.toArray());
    this.requestRelight();
  }

  /** Restore the decomposition's estimated lighting (preview returns to the
   * reconstruction). */
  resetToEstimated(): void {
    if (!this.estimated) return;
    this.lighting.setAll(this.estimated);
    this.events.onLighting?.(this.lighting.toArray());
    this.requestRelight();
  }

  /** Estimate lighting from a reference image and adopt it. */
  async transferFrom(reference: Blob,
                     space: "srgb" | "linear" = "srgb"): Promise<void> {
    if (!this.sessionId) {
      this.events.onToast?.("upload an image first");
      return;
    }
    try {
      const result = await this.api.transfer(this.sessionId, reference, space);
      this.lighting.setAll(result.lighting);
      this.events.onLighting?.(this.lighting.toArray());
      const relit = await this.api.fetchArtifact(result.relit_url);
      this.setPreview(relit, this.lighting.toArray());
      this.events.onOnline?.(true);
    } catch (err) {
      this.report(err);
      throw err;
    }
  }

  /** The exported lighting JSON equals the slider state exactly. */
  exportLighting(): { version: string; coeffs: number[] } {
    return this.lighting.toJSON();
  }

  exportPreview(): Blob | null {
    return this.lastPreview;
  }

  /** Resolves when no relight request is pending or in flight. */
  settle(): Promise<void> {
    return this.queue.idle();
  }

  private requestRelight(): void {
    if (!this.sessionId) return;
    this.queue.push(this.lighting.toArray());
  }

  private async doRelight(coeffs: number[]): Promise<void> {
    if (!this.sessionId || coeffs.length !== N_COEFFS) return;
    try {
      const blob = await this.api.relight(this.sessionId, coeffs);
      this.setPreview(blob, coeffs);
      this.events.onOnline?.(true);
    } catch (err) {
      this.report(err);
    }
  }

  private setPreview(blob: Blob, lighting: number[]): void {
    this.lastPreview = blob;
    this.lastPreviewLighting = lighting.slice();
    this.events.onPreview?.(blob, lighting);
  }

  private report(err: unknown): void {
    const message = err instanceof Error ? err.message : String(err);
    this.events.onToast?.(message);
    if (err instanceof TypeError) {
      // fetch-level failure: we are offline
      this.events.onOnline?.(false);
    }
  }
}
