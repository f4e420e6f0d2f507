/* tslint:disable */
/* eslint-disable */

/**
 * Runs DFL and FedAvg on the given TOML config. Returns JSON with the
 * three comparison charts and the summary numbers.
 */
export function compare_schemes(config_toml: string): string;

/**
 * Default experiment config as TOML, to seed the page's editor.
 */
export function default_config(): string;

/**
 * Pure gossip (no local training) on a small graph. Returns an SVG of the
 * log10 spread between UAV models per round.
 */
export function gossip_consensus(shape: string, num_uavs: number, rounds: number, mixing: string, seed: bigint): string;

/**
 * SNR, Shannon rate and per-model transmission time of one A2A link.
 */
export function link_budget(tx_power_dbm: number, channel_gain_db: number, noise_power_dbm: number, bandwidth_hz: number, payload_bits: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly compare_schemes: (a: number, b: number) => [number, number, number, number];
    readonly default_config: () => [number, number];
    readonly gossip_consensus: (a: number, b: number, c: number, d: number, e: number, f: number, g: bigint) => [number, number, number, number];
    readonly link_budget: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
