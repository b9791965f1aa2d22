/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const demo_deflicker: (a: number, b: number, c: number, d: number, e: number) => [number, number];
export const demo_elapsed_ms: (a: number) => number;
export const demo_exposure_fraction: (a: number) => [number, number];
export const demo_frame_rgba: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const demo_height: (a: number) => number;
export const demo_histogram: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const demo_is_empty: (a: number) => number;
export const demo_kl_series: (a: number) => [number, number];
export const demo_len: (a: number) => number;
export const demo_mean_curve: (a: number, b: number, c: number) => [number, number, number, number];
export const demo_mean_psnr: (a: number, b: number, c: number) => [number, number, number];
export const demo_new: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
export const demo_singular: (a: number) => [number, number];
export const demo_thresholds: (a: number) => [number, number];
export const demo_width: (a: number) => number;
export const ste_weights: (a: number, b: number) => [number, number, number, number];
export const __externref_table_alloc: () => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
