/**
 * Lighting coefficient state for the studio sliders.
 *
 * The 27 values are basis-major (9 spherical-harmonic bases x RGB). Sliders
 * are grouped by what they do to the light: the constant term, the three
 * directional (degree-1) bases, and the five quadratic (degree-2) bases.
 * A channel lock ties R, G and B of a basis together so the light stays
 * white while dragging.
 */

export const N_BASES = 9;
export const N_CHANNELS = 3;
export const N_COEFFS = N_BASES * N_CHANNELS;

export const SLIDER_MIN = -2;
export const SLIDER_MAX = 2;

export const BASIS_NAMES = [
  "ambient", "y", "z", "x", "xy", "yz", "3z²-1", "xz", "x²-y²",
] as const;

export type GroupName = "dc" | "directional" | "quadratic";

export const GROUPS: Record<GroupName, number[]> = {
  dc: [0],
  directional: [1, 2, 3],
  quadratic: [4, 5, 6, 7, 8],
};

export function clampValue(v: number): number {
  if (Number.isNaN(v)) return 0;
  return Math.min(SLIDER_MAX, Math.max(SLIDER_MIN, v));
}

export class LightingState {
  private values: number[];

  constructor(initial?: readonly number[]) {
    this.values = new Array(N_COEFFS).fill(0);
    if (initial) this.setAll(initial);
  }

  get(basis: number, channel: number): number {
    return this.values[basis * N_CHANNELS + channel];
  }

  /** Set one coefficient; with the channel lock, all three channels move. */
  set(basis: number, channel: number, value: number, lock = false): void {
    const v = clampValue(value);
    if (lock) {
      for (let c = 0; c < N_CHANNELS; c++) this.values[basis * N_CHANNELS + c] = v;
    } else {
      this.values[basis * N_CHANNELS + channel] = v;
    }
  }

  setAll(coeffs: readonly number[]): void {
    if (coeffs.length !== N_COEFFS) {
      throw new Error(`lighting must have ${N_COEFFS} values, got ${coeffs.length}`);
    }
    this.values = coeffs.map(clampValue);
  }

  /** Exact current slider state; this is what gets sent and exported. */
  toArray(): number[] {
    return this.values.slice();
  }

  equals(other: readonly number[]): boolean {
    return other.length === N_COEFFS && this.values.every((v, i) => v === other[i]);
  }

  scaleAll(factor: number): void {
    this.values = this.values.map((v) => clampValue(v * factor));
  }

  /** Export payload; mirrors the CLI/service lighting JSON schema. */
  toJSON(): { version: string; coeffs: number[] } {
    return { version: "v1", coeffs: this.toArray() };
  }
}
