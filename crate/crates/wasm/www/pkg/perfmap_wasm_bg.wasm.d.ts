/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const __wbg_image_free: (a: number, b: number) => void;
export const demo_diffusion_image: (a: number, b: number, c: number, d: number) => [number, number, number];
export const demo_march_from: (a: number, b: number, c: number) => [number, number, number];
export const demo_new: (a: number, b: bigint, c: number) => [number, number, number];
export const demo_ppm_image: (a: number) => number;
export const demo_rerun: (a: number, b: number, c: number, d: number, e: number) => [number, number];
export const demo_rho_raw: (a: number) => number;
export const demo_rho_smoothed: (a: number) => number;
export const demo_seeds: (a: number) => number;
export const demo_size: (a: number) => number;
export const demo_truth_image: (a: number) => number;
export const demo_vessel_voxels: (a: number) => number;
export const image_height: (a: number) => number;
export const image_pixels: (a: number) => [number, number];
export const image_width: (a: number) => number;
export const __externref_table_alloc: () => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
