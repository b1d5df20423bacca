export { hash128, hash128Halves } from "./murmur3.js";
export {
  DIGEST_BYTES,
  EdgeSet,
  canonicalBytes,
  combineEdge,
  digestBlockSequence,
  digestEdges,
  digestHex,
} from "./logicState.js";
export {
  FLAG_ABNORMAL,
  FLAG_EDGE_OVERFLOW,
  FRAME_LEN,
  FRAME_MAGIC,
  FRAME_VERSION,
  decodeFrame,
  encodeFrame,
  framesFromTrace,
  type Frame,
} from "./frames.js";
export {
  ENDPOINT_ENV,
  Shim,
  TRACE_ENV,
  installShim,
  type ShimOptions,
} from "./shim.js";
