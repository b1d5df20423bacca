/**
 * Scripted toy target for integration tests.
 *
 * Walks a fixed block path: entry, a loop body (TOY_LOOPS iterations,
 * default 3), a check block, then the exit block. With TOY_CRASH=1 it
 * throws after the check block, so the exit block — and the edge into
 * it — is never recorded.
 */

import { installShim } from "../shim.js";

export const ENTRY_BLOCK = 101;
export const LOOP_BLOCK = 102;
export const CHECK_BLOCK = 103;
export const EXIT_BLOCK = 109;

const shim = installShim();

function run(): void {
  const loops = Math.max(1, Number(process.env.TOY_LOOPS ?? 3));
  shim.onBlockEnter(ENTRY_BLOCK);
  for (let i = 0; i < loops; i++) {
    shim.onBlockEnter(LOOP_BLOCK);
  }
  shim.onBlockEnter(CHECK_BLOCK);
  if (process.env.TOY_CRASH === "1") {
    (null as unknown as { boom(): void }).boom(); // deliberate TypeError
  }
  shim.onBlockEnter(EXIT_BLOCK);
  console.log(`toy: completed ${loops} loop iterations`);
}

run();
