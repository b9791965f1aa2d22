/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    deflicker(scale: number, radius: number, kl_margin: number, local: boolean): void;
    elapsed_ms(): number;
    exposure_fraction(): Float64Array;
    /**
     * RGBA bytes of frame `t` of `"raw"`, `"output"` or `"gt"`.
     */
    frame_rgba(which: string, t: number): Uint8Array;
    height(): number;
    histogram(which: string, t: number): Float64Array;
    is_empty(): boolean;
    kl_series(): Float64Array;
    len(): number;
    mean_curve(which: string): Float64Array;
    mean_psnr(which: string): number;
    constructor(width: number, height: number, frames: number, seed: number, window: number, local: number);
    singular(): Uint32Array;
    thresholds(): Float64Array;
    width(): number;
}

/**
 * STE weights over offsets `-radius..=radius` for the centre frame.
 */
export function ste_weights(scale: number, radius: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_deflicker: (a: number, b: number, c: number, d: number, e: number) => [number, number];
    readonly demo_elapsed_ms: (a: number) => number;
    readonly demo_exposure_fraction: (a: number) => [number, number];
    readonly demo_frame_rgba: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly demo_height: (a: number) => number;
    readonly demo_histogram: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly demo_is_empty: (a: number) => number;
    readonly demo_kl_series: (a: number) => [number, number];
    readonly demo_len: (a: number) => number;
    readonly demo_mean_curve: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_mean_psnr: (a: number, b: number, c: number) => [number, number, number];
    readonly demo_new: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
    readonly demo_singular: (a: number) => [number, number];
    readonly demo_thresholds: (a: number) => [number, number];
    readonly demo_width: (a: number) => number;
    readonly ste_weights: (a: number, b: number) => [number, number, number, number];
    readonly __externref_table_alloc: () => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
