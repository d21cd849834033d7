/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const posterior_density: (a: number, b: number) => [number, number, number, number];
export const posterior_samples: (a: number, b: number, c: bigint) => [number, number, number, number];
export const run_estimate: (a: number, b: number, c: bigint) => [number, number, number, number];
export const solve_pressure: (a: number, b: number, c: number) => [number, number, number, number];
export const true_parameter: () => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
