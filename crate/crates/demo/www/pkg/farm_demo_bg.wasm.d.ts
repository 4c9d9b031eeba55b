/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const factor_scree: (a: number, b: number, c: bigint, d: number) => [number, number];
export const farmtest_curve: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number];
export const sbm_explore: (a: number, b: number, c: number, d: bigint) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
