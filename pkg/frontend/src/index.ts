export { ApiClient, ApiError, NotFoundError, SignedOffError, VersionConflictError } from "./api.js";
export type { EditResponse } from "./api.js";
export * from "./types.js";
export { ReviewStore } from "./store.js";
export type { ConflictBanner, OverlayToggles, ViewState } from "./store.js";
export {
  deleteTool,
  flipTool,
  mergeTool,
  reclassifyTool,
  redrawTool,
  rotateTool,
  splitTool,
} from "./tools.js";
export type { ToolResult } from "./tools.js";
export { pointInPolygon, polygonArea, polygonBounds, splitPolygon, toPixelPolygon } from "./geometry.js";
export { colorFor, drawOverlays, fitTransform, hitTest, imageToScreen, screenToImage } from "./viewer.js";
