/** Explorer state machine, independent of the DOM.
 *
 * Holds the latent vector and the baseline (the values of the last Seed),
 * debounces slider edits, and keeps at most one explore request in
 * flight; a trigger arriving mid-flight queues exactly one follow-up with
 * the latest latent. Seed is blocked while busy, Reset is queued once.
 */

import { ExplorerApi, ExploreResponse } from "./api.js";
import { SliderGroup, clampSliderValue } from "./sliders.js";

export interface ExplorerCallbacks {
  onOutputs?: (outputs: Record<string, string>, response: ExploreResponse) => void;
  onError?: (message: string) => void;
  onBusyChange?: (busy: boolean) => void;
}

export interface ExplorerCoreOptions {
  modelId: string;
  latentDim: number;
  api: ExplorerApi;
  callbacks?: ExplorerCallbacks;
  condition?: string;
  debounceMs?: number;
  /** Uniform source in [0, 1); injectable for deterministic tests. */
  randomSource?: () => number;
}

const DEFAULT_DEBOUNCE_MS = 150;

export class ExplorerCore {
  readonly modelId: string;
  readonly latentDim: number;

  latent: number[];
  private baseline: number[];
  private busyFlag = false;
  private queued = false;
  private debounceTimer: ReturnType<typeof setTimeout> | null = null;
  private idleResolvers: Array<() => void> = [];

  lastOutputs: Record<string, string> | null = null;

  private readonly api: ExplorerApi;
  private readonly callbacks: ExplorerCallbacks;
  private readonly condition?: string;
  private readonly debounceMs: number;
  private readonly randomSource: () => number;

  constructor(options: ExplorerCoreOptions) {
    this.modelId = options.modelId;
    this.latentDim = options.latentDim;
    this.api = options.api;
    this.callbacks = options.callbacks ?? {};
    this.condition = options.condition;
    this.debounceMs = options.debounceMs ?? DEFAULT_DEBOUNCE_MS;
    this.randomSource = options.randomSource ?? Math.random;
    this.latent = new Array<number>(this.latentDim).fill(0);
    this.baseline = [...this.latent];
  }

  get busy(): boolean {
    return this.busyFlag;
  }

  get baselineVector(): number[] {
    return [...this.baseline];
  }

  /** Set every dimension of the group to one value; request debounced. */
  setGroupValue(group: SliderGroup, value: number): void {
    const clamped = clampSliderValue(value);
    for (let i = group.start; i < group.start + group.size; i++) {
      this.latent[i] = clamped;
    }
    this.scheduleRegenerate();
  }

  /** Draw a fresh standard-normal latent and make it the new baseline.
   * Returns false (and does nothing) while a request is in flight. */
  seed(): boolean {
    if (this.busyFlag) {
      return false;
    }
    this.cancelDebounce();
    this.latent = this.drawStandardNormal();
    this.baseline = [...this.latent];
    void this.regenerate();
    return true;
  }

  /** Revert the latent to the baseline. A no-op (request suppressed) when
   * nothing changed; queued once when busy. */
  reset(): boolean {
    if (vectorsEqual(this.latent, this.baseline)) {
      return false;
    }
    this.latent = [...this.baseline];
    this.cancelDebounce();
    if (this.busyFlag) {
      this.queued = true;
    } else {
      void this.regenerate();
    }
    return true;
  }

  /** Resolves once no request is in flight, queued, or pending debounce. */
  whenIdle(): Promise<void> {
    if (this.isIdle()) {
      return Promise.resolve();
    }
    return new Promise((resolve) => this.idleResolvers.push(resolve));
  }

  private isIdle(): boolean {
    return !this.busyFlag && !this.queued && this.debounceTimer === null;
  }

  private cancelDebounce(): void {
    if (this.debounceTimer !== null) {
      clearTimeout(this.debounceTimer);
      this.debounceTimer = null;
    }
  }

  private scheduleRegenerate(): void {
    this.cancelDebounce();
    this.debounceTimer = setTimeout(() => {
      this.debounceTimer = null;
      if (this.busyFlag) {
        this.queued = true;
      } else {
        void this.regenerate();
      }
    }, this.debounceMs);
  }

  private async regenerate(): Promise<void> {
    const payload = [...this.latent];
    if (payload.length !== this.latentDim) {
      this.callbacks.onError?.(
        `latent length ${payload.length} does not match latent_dim ${this.latentDim}`,
      );
      return;
    }
    this.busyFlag = true;
    this.callbacks.onBusyChange?.(true);
    try {
      const response = await this.api.explore(this.modelId, payload, this.condition);
      this.lastOutputs = response.outputs;
      this.callbacks.onOutputs?.(response.outputs, response);
    } catch (error) {
      this.callbacks.onError?.(error instanceof Error ? error.message : String(error));
    } finally {
      this.busyFlag = false;
      this.callbacks.onBusyChange?.(false);
      if (this.queued) {
        this.queued = false;
        void this.regenerate();
      } else {
        this.settleIdle();
      }
    }
  }

  private settleIdle(): void {
    if (!this.isIdle()) {
      return;
    }
    const resolvers = this.idleResolvers;
    this.idleResolvers = [];
    for (const resolve of resolvers) {
      resolve();
    }
  }

  private drawStandardNormal(): number[] {
    const out = new Array<number>(this.latentDim);
    for (let i = 0; i < this.latentDim; i++) {
      // Box-Muller; clamp u1 away from 0
      const u1 = Math.max(this.randomSource(), 1e-12);
      const u2 = this.randomSource();
      out[i] = Math.sqrt(-2 * Math.log(u1)) * Math.cos(2 * Math.PI * u2);
    }
    return out;
  }
}

function vectorsEqual(a: number[], b: number[]): boolean {
  return a.length === b.length && a.every((value, i) => value === b[i]);
}
