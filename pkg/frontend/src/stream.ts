// WebSocket subscription with auto-reconnect and staleness tracking.
// DOM-free: the socket factory and clock are injected, so the same client
// runs in the browser, in unit tests, and in the node end-to-end check.

import { applySnapshot, checkStale, setConnection } from "./state.js";
import type { ConsoleState } from "./state.js";
import type { Snapshot } from "./types.js";

// Handler slots typed loosely so both the DOM WebSocket and the node `ws`
// client satisfy the interface structurally.
/* eslint-disable @typescript-eslint/no-explicit-any */
export interface SocketLike {
  onopen: ((ev?: any) => void) | null;
  onclose: ((ev?: any) => void) | null;
  onerror: ((ev?: any) => void) | null;
  onmessage: ((ev: any) => void) | null;
  close(): void;
}
/* eslint-enable @typescript-eslint/no-explicit-any */

export interface StreamOptions {
  url: string;
  socketFactory: (url: string) => SocketLike;
  getState: () => ConsoleState;
  setState: (next: ConsoleState) => void;
  now?: () => number;
  staleAfterMs?: number;
  maxBackoffMs?: number;
  schedule?: (fn: () => void, ms: number) => unknown;
}

export interface StreamHandle {
  stop(): void;
  pollStaleness(): void;
}

export function connectStream(options: StreamOptions): StreamHandle {
  const now = options.now ?? (() => Date.now());
  const schedule = options.schedule ?? ((fn, ms) => setTimeout(fn, ms));
  const staleAfterMs = options.staleAfterMs ?? 5000;
  const maxBackoffMs = options.maxBackoffMs ?? 30000;
  let attempts = 0;
  let stopped = false;
  let socket: SocketLike | null = null;

  const open = () => {
    if (stopped) return;
    socket = options.socketFactory(options.url);
    socket.onopen = () => {
      attempts = 0;
    };
    socket.onmessage = (ev) => {
      const snapshot = JSON.parse(String(ev.data)) as Snapshot;
      options.setState(applySnapshot(options.getState(), snapshot, now()));
    };
    socket.onerror = () => undefined; // onclose always follows
    socket.onclose = () => {
      if (stopped) return;
      options.setState(setConnection(options.getState(), "stale"));
      const backoff = Math.min(1000 * 2 ** attempts, maxBackoffMs);
      attempts += 1;
      schedule(open, backoff);
    };
  };
  open();

  return {
    stop() {
      stopped = true;
      socket?.close();
    },
    pollStaleness() {
      options.setState(checkStale(options.getState(), now(), staleAfterMs));
    },
  };
}
