/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_packet_free: (a: number, b: number) => void;
export const nonlinearGap: (a: number, b: number) => [number, number, number];
export const packet_advance: (a: number, b: number) => [number, number];
export const packet_density: (a: number) => [number, number];
export const packet_hamiltonian: (a: number) => [number, number, number];
export const packet_new: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const packet_positions: (a: number) => [number, number];
export const packet_potential: (a: number) => [number, number];
export const packet_time: (a: number) => number;
export const walkerCloud: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
