/* tslint:disable */
/* eslint-disable */

/**
 * CRC-16/CCITT-FALSE of the UTF-8 bytes of `text`, as `0xABCD`.
 */
export function crc16_of(text: string): string;

/**
 * Encodes one uplink frame and, when `flip_bit >= 0`, decodes a copy with
 * that bit inverted.
 */
export function frame_explorer(channel: number, address: string, kind: string, a: number, b: number, flip_bit: number): string;

/**
 * Airtime, analytic and simulated delivery for one link setting, plus the
 * analytic delivery curve over every retry budget.
 */
export function link_budget(loss: number, max_retries: number, payload_len: number, rate: string, trials: number, seed: number): string;

/**
 * The reference day with the given link loss: every stored sample, plus
 * the gateway display and actuators just after the `hhmm` sample.
 */
export function paper_day(hhmm: string, loss: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly crc16_of: (a: number, b: number) => [number, number];
    readonly frame_explorer: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number];
    readonly link_budget: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number];
    readonly paper_day: (a: number, b: number, c: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
