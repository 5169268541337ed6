/* tslint:disable */
/* eslint-disable */

/**
 * A Gaussian packet evolved by the `(ρ, Φ)` flow.
 */
export class Packet {
    free(): void;
    [Symbol.dispose](): void;
    advance(steps: number): void;
    density(): Float64Array;
    hamiltonian(): number;
    /**
     * `potential` is one of `free`, `harmonic`, `barrier`, `double-well`.
     */
    constructor(potential: string, x0: number, sigma: number, momentum: number);
    positions(): Float64Array;
    potential(): Float64Array;
    time(): number;
}

export function nonlinearGap(ratio: number, steps: number): number;

export function walkerCloud(walkers: number, steps: number, dt: number, bins: number, seed: bigint): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_packet_free: (a: number, b: number) => void;
    readonly nonlinearGap: (a: number, b: number) => [number, number, number];
    readonly packet_advance: (a: number, b: number) => [number, number];
    readonly packet_density: (a: number) => [number, number];
    readonly packet_hamiltonian: (a: number) => [number, number, number];
    readonly packet_new: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly packet_positions: (a: number) => [number, number];
    readonly packet_potential: (a: number) => [number, number];
    readonly packet_time: (a: number) => number;
    readonly walkerCloud: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number, number];
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
