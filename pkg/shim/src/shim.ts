/**
 * The runtime a target links against: record block entries during one
 * execution, then emit a single digest frame on the way out — on the
 * normal exit path, on crashes, and on fatal signals alike. Nothing
 * in here may ever take the target down with it: every delivery
 * failure degrades (endpoint -> trace file -> silent drop) and the
 * process exit status is left untouched.
 *
 * Single-threaded targets only; recording from worker threads is
 * undefined behavior (each thread would need its own state).
 */

import dgram from "node:dgram";
import fs from "node:fs";

import {
  FLAG_ABNORMAL,
  FLAG_EDGE_OVERFLOW,
  encodeFrame,
} from "./frames.js";
import { EdgeSet, combineEdge, digestEdges } from "./logicState.js";

/** Collector endpoint, e.g. "udp:127.0.0.1:7700". */
export const ENDPOINT_ENV = "LSCOV_ENDPOINT";
/** Fallback sink: a trace file the collector can replay. */
export const TRACE_ENV = "LSCOV_TRACE";

export interface ShimOptions {
  /** Overrides LSCOV_ENDPOINT. Only udp:<host>:<port> is deliverable
   * from a Node process; unix:<path> values are treated as
   * unreachable and fall through to the trace file. */
  endpoint?: string;
  /** Overrides LSCOV_TRACE. */
  tracePath?: string;
  /** Edge-set capacity; fixed for the life of the process. */
  capacity?: number;
}

interface UdpTarget {
  host: string;
  port: number;
}

function parseUdpEndpoint(endpoint: string): UdpTarget | null {
  if (!endpoint.startsWith("udp:")) return null;
  const rest = endpoint.slice(4);
  const colon = rest.lastIndexOf(":");
  if (colon <= 0) return null;
  const port = Number(rest.slice(colon + 1));
  if (!Number.isInteger(port) || port < 1 || port > 65535) return null;
  return { host: rest.slice(0, colon), port };
}

export class Shim {
  private prev = 0;
  private readonly edges: EdgeSet;
  private emitted = false;
  private readonly endpoint: string | undefined;
  private readonly tracePath: string | undefined;

  constructor(opts: ShimOptions = {}) {
    this.edges = new EdgeSet(opts.capacity ?? EdgeSet.DEFAULT_CAPACITY);
    this.endpoint = opts.endpoint ?? process.env[ENDPOINT_ENV];
    this.tracePath = opts.tracePath ?? process.env[TRACE_ENV];
  }

  /** Coverage callback: one call per basic-block entry. */
  onBlockEnter(block: number): void {
    this.edges.add(combineEdge(this.prev, block));
    this.prev = block >>> 0;
  }

  /** Number of distinct edges recorded so far. */
  get edgeCount(): number {
    return this.edges.size;
  }

  /** True once the edge set has dropped at least one edge. */
  get overflowed(): boolean {
    return this.edges.overflow > 0;
  }

  get hasEmitted(): boolean {
    return this.emitted;
  }

  /** Digest of the current logic state (does not emit). */
  digest(): bigint {
    return digestEdges(this.edges.edges());
  }

  private buildFrame(abnormal: boolean): Uint8Array {
    let flags = 0;
    if (abnormal) flags |= FLAG_ABNORMAL;
    if (this.overflowed) flags |= FLAG_EDGE_OVERFLOW;
    return encodeFrame(this.digest(), flags);
  }

  private appendToTrace(frame: Uint8Array): boolean {
    if (!this.tracePath) return false;
    try {
      fs.appendFileSync(this.tracePath, frame);
      return true;
    } catch {
      return false; // never perturb the target
    }
  }

  /**
   * Emit the execution's frame exactly once and reset recording state
   * for the next execution (prev-block back to 0).
   *
   * Synchronous: the endpoint is only attempted when it is a UDP
   * address and the event loop is still alive enough to flush it —
   * from exit hooks the trace file is the reliable channel, which is
   * exactly the "endpoint unreachable" fallback. Returns a promise
   * resolving true if any sink accepted the frame.
   */
  finish(abnormal = false): Promise<boolean> {
    if (this.emitted) return Promise.resolve(false);
    this.emitted = true;
    const frame = this.buildFrame(abnormal);
    this.prev = 0;

    const udp = this.endpoint ? parseUdpEndpoint(this.endpoint) : null;
    if (udp) {
      return this.sendUdp(frame, udp).then(
        (sent) => sent || this.appendToTrace(frame),
        () => this.appendToTrace(frame),
      );
    }
    return Promise.resolve(this.appendToTrace(frame));
  }

  /**
   * Fully synchronous emission for process-exit context, where no
   * event loop turn will ever run again: skips the endpoint (it is
   * unreachable by definition there) and goes straight to the trace
   * file.
   */
  finishSync(abnormal = false): boolean {
    if (this.emitted) return false;
    this.emitted = true;
    const frame = this.buildFrame(abnormal);
    this.prev = 0;
    return this.appendToTrace(frame);
  }

  private sendUdp(frame: Uint8Array, target: UdpTarget): Promise<boolean> {
    return new Promise((resolve) => {
      let socket: dgram.Socket;
      try {
        socket = dgram.createSocket("udp4");
      } catch {
        resolve(false);
        return;
      }
      const settle = (ok: boolean) => {
        try {
          socket.close();
        } catch {
          /* already closed */
        }
        resolve(ok);
      };
      socket.once("error", () => settle(false));
      socket.send(frame, target.port, target.host, (err) =>
        settle(err == null),
      );
    });
  }
}

let hooksInstalled = false;

/**
 * Construct a shim and wire it into the process lifecycle:
 *
 * - normal exit       -> frame with flags bit 0 clear
 * - uncaught throw /
 *   unhandled reject  -> frame with flags bit 0 set, then exit(1)
 * - SIGINT/SIGTERM/
 *   SIGHUP            -> frame with flags bit 0 set, conventional
 *                        128+n exit status
 *
 * The emission latch makes these paths safe to overlap: whichever
 * fires first wins, the rest are no-ops.
 */
export function installShim(opts: ShimOptions = {}): Shim {
  const shim = new Shim(opts);
  if (hooksInstalled) {
    return shim; // one instrumented runtime per process
  }
  hooksInstalled = true;

  process.on("exit", () => {
    shim.finishSync(false);
  });

  const crash = (err: unknown) => {
    shim.finishSync(true);
    console.error(err instanceof Error ? err.stack ?? err.message : err);
    process.exit(1);
  };
  process.on("uncaughtException", crash);
  process.on("unhandledRejection", crash);

  const fatalSignals: Array<[NodeJS.Signals, number]> = [
    ["SIGHUP", 1],
    ["SIGINT", 2],
    ["SIGTERM", 15],
  ];
  for (const [sig, num] of fatalSignals) {
    process.on(sig, () => {
      shim.finishSync(true);
      process.exit(128 + num);
    });
  }
  return shim;
}
