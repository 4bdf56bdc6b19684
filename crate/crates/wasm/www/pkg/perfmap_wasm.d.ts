/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    diffusion_image(iterations: number, conductance: number, threshold: number): Image;
    march_from(i: number, j: number): Image;
    /**
     * Generates a `size`³ phantom (noise in percent of the vessel contrast)
     * and runs the pipeline with default parameters.
     */
    constructor(size: number, seed: bigint, noise_percent: number);
    ppm_image(): Image;
    rerun(threshold: number, quantile: number, iterations: number, conductance: number): void;
    truth_image(): Image;
    readonly rho_raw: number;
    readonly rho_smoothed: number;
    readonly seeds: number;
    readonly size: number;
    readonly vessel_voxels: number;
}

/**
 * An RGBA image for `ImageData`.
 */
export class Image {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Copies the pixels out as a `Uint8Array`.
     */
    pixels(): Uint8Array;
    readonly height: number;
    readonly width: number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly __wbg_image_free: (a: number, b: number) => void;
    readonly demo_diffusion_image: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly demo_march_from: (a: number, b: number, c: number) => [number, number, number];
    readonly demo_new: (a: number, b: bigint, c: number) => [number, number, number];
    readonly demo_ppm_image: (a: number) => number;
    readonly demo_rerun: (a: number, b: number, c: number, d: number, e: number) => [number, number];
    readonly demo_rho_raw: (a: number) => number;
    readonly demo_rho_smoothed: (a: number) => number;
    readonly demo_seeds: (a: number) => number;
    readonly demo_size: (a: number) => number;
    readonly demo_truth_image: (a: number) => number;
    readonly demo_vessel_voxels: (a: number) => number;
    readonly image_height: (a: number) => number;
    readonly image_pixels: (a: number) => [number, number];
    readonly image_width: (a: number) => number;
    readonly __externref_table_alloc: () => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
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
