/* tslint:disable */
/* eslint-disable */

/**
 * A trainer kept alive between calls.
 */
export class Session {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * `scenario`: coop | hierarchical. `correction`: none | fcc | occ.
     */
    constructor(scenario: string, correction: string, seed: bigint);
    /**
     * Greedy rollout of the current policies as JSON.
     */
    rollout(seed: bigint): string;
    /**
     * Relabels the oldest stored episodes with the current policies at
     * every depth and reports how far each falls short of the deepest.
     */
    staleness(episodes: number): string;
    /**
     * Trains `episodes` more episodes; returns their mean team return.
     */
    train(episodes: number): number;
    readonly episodes: number;
}

export function category_probabilities(logits: Float64Array): Float64Array;

/**
 * Counts of hard Gumbel-softmax samples per category.
 */
export function gumbel_histogram(logits: Float64Array, beta: number, draws: number, seed: bigint): Uint32Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_session_free: (a: number, b: number) => void;
    readonly category_probabilities: (a: number, b: number) => [number, number];
    readonly gumbel_histogram: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number, number];
    readonly session_episodes: (a: number) => number;
    readonly session_new: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number];
    readonly session_rollout: (a: number, b: bigint) => [number, number, number, number];
    readonly session_staleness: (a: number, b: number) => [number, number, number, number];
    readonly session_train: (a: number, b: number) => [number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
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
