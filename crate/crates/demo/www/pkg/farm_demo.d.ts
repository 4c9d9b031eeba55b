/* tslint:disable */
/* eslint-disable */

/**
 * Leading sample eigenvalues of the two-factor scree setting and the
 * ratio estimate of the number of factors.
 */
export function factor_scree(n: number, p: number, seed: bigint, shown: number): string;

/**
 * FarmTest on the heavy-tailed multiple-testing setting: the FDP^A curve,
 * the critical value and the realized false discovery proportion.
 */
export function farmtest_curve(n: number, p: number, n_signal: number, signal: number, alpha: number, seed: bigint): string;

/**
 * Spectral clustering of a two-block SBM with edge probabilities
 * `a log n / n` and `b log n / n`.
 */
export function sbm_explore(n: number, a: number, b: number, seed: bigint): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly factor_scree: (a: number, b: number, c: bigint, d: number) => [number, number];
    readonly farmtest_curve: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number];
    readonly sbm_explore: (a: number, b: number, c: number, d: bigint) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
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
