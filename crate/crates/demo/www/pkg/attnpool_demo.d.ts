/* tslint:disable */
/* eslint-disable */

/**
 * Metrics for a square matrix of counts given as rows of whitespace- or
 * comma-separated integers (one row per line, rows are true classes).
 */
export function confusion_metrics(text: string): string;

/**
 * Learning rate at every update step `1..=total_steps`, as a JSON array.
 */
export function lr_curve(total_steps: number, peak_lr: number, warmup_fraction: number): string;

/**
 * Trains one pooling head on a small planted-saliency set and returns the
 * loss curve plus the attention it puts on a held-out utterance.
 */
export function saliency_demo(pooling: string, seed: bigint, epochs: number, noise_sigma: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly confusion_metrics: (a: number, b: number) => [number, number, number, number];
    readonly lr_curve: (a: number, b: number, c: number) => [number, number, number, number];
    readonly saliency_demo: (a: number, b: number, c: bigint, d: number, e: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
