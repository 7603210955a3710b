/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const barrier_rows: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
export const evolve_circle: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const two_point_series: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
