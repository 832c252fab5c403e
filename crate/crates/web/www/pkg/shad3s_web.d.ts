/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Family ids, in catalog order.
     */
    families(): string[];
    /**
     * Lighting hint for a camera-relative light direction, `size`×`size` RGBA.
     */
    gnomon(azimuth: number, elevation: number, size: number): Uint8Array;
    constructor();
    /**
     * Renders one corpus point. `view` is `sketch`, `contour`, `masks` or `diffuse`.
     */
    render(k: number, seed: bigint, scene: number, pose: number, resolution: number, view: string): Uint8Array;
    /**
     * Metadata of the point `render` draws, as JSON.
     */
    render_meta(k: number, seed: bigint, scene: number, pose: number, resolution: number): string;
    /**
     * The four tones of a family side by side, darkest first.
     */
    tones(family: string): Uint8Array;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_families: (a: number) => [number, number];
    readonly demo_gnomon: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly demo_new: () => number;
    readonly demo_render: (a: number, b: number, c: bigint, d: number, e: number, f: number, g: number, h: number) => [number, number, number, number];
    readonly demo_render_meta: (a: number, b: number, c: bigint, d: number, e: number, f: number) => [number, number, number, number];
    readonly demo_tones: (a: number, b: number, c: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_drop_slice: (a: number, b: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
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
