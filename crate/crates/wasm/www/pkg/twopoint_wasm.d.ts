/* tslint:disable */
/* eslint-disable */

/**
 * Solve the barrier equation from `amplitude sin s` on `[0, pi/2]` with
 * forcing `delta` and no curvature term. Returns `rows` time rows of
 * `n_s` values at equally spaced times in `[0, t_end]`.
 */
export function barrier_rows(p: number, amplitude: number, delta: number, t_end: number, n_s: number, rows: number): Float64Array;

/**
 * Evolve `sin x` on the circle of length `2 pi` under the `p`-Laplacian
 * flow (`p = 2` is the heat equation). Returns `snapshots + 1` rows of `n`
 * values, the first row being the initial data.
 */
export function evolve_circle(n: number, p: number, t_end: number, snapshots: number): Float64Array;

/**
 * Worst two-point value per snapshot of the same run, modulus form against
 * the analytic barrier `amplitude e^{-rate t} sin s` on `[0, pi/2]`.
 * Returns `(t, worst)` pairs.
 */
export function two_point_series(n: number, p: number, t_end: number, snapshots: number, amplitude: number, rate: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly barrier_rows: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly evolve_circle: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly two_point_series: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
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
