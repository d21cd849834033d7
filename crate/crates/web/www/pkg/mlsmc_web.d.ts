/* tslint:disable */
/* eslint-disable */

/**
 * Unnormalized level-`level` posterior density `exp(-Φ_l)` on a
 * `grid × grid` lattice of cell centres over `[-1, 1]²`, row-major with
 * `u2` varying slowest.
 */
export function posterior_density(level: number, grid: number): Float64Array;

/**
 * Exact draws from the level-`level` posterior by prior rejection,
 * flattened as `[u1, u2, u1, u2, ...]`.
 */
export function posterior_samples(level: number, n: number, seed: bigint): Float64Array;

/**
 * One multilevel estimate of the posterior mean pressure at the midpoint
 * with `N_l = base_n · 2^{L-1-l}`, alongside a quadrature reference.
 * Returns the estimate record as JSON with an added `reference` field.
 */
export function run_estimate(level: number, base_n: number, seed: bigint): string;

/**
 * Pressure at every mesh node (boundary zeros included) for parameter
 * `(u1, u2)` on the level-`level` mesh.
 */
export function solve_pressure(u1: number, u2: number, level: number): Float64Array;

/**
 * Parameter that generated the synthetic data, `[u1, u2]`.
 */
export function true_parameter(): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly posterior_density: (a: number, b: number) => [number, number, number, number];
    readonly posterior_samples: (a: number, b: number, c: bigint) => [number, number, number, number];
    readonly run_estimate: (a: number, b: number, c: bigint) => [number, number, number, number];
    readonly solve_pressure: (a: number, b: number, c: number) => [number, number, number, number];
    readonly true_parameter: () => [number, number, number, number];
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
