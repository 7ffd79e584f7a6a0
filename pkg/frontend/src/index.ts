export {
  AggregateOp,
  BoundTable,
  ContextOptions,
  EngineContext,
  FinalizedContextError,
  readCsv,
} from "./bindings.js";
export { EngineApiError, EngineClient } from "./client.js";
export { runOverheadBench, OverheadOptions, OverheadRow } from "./overheadBench.js";
export { startService, runCli, freePort, PYTHON } from "./engineProc.js";
