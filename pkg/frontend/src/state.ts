// Workflow state machine. Pure: every UI event maps to a new state or a
// no-op, and nothing outside `transition` mutates phase or ROI. The
// controller performs the side effects (requests, layer updates) and
// feeds resolution events back in.

export type Phase =
  | "Idle"
  | "RoiPlacing"
  | "RoiLocked"
  | "Masking"
  | "Processing"
  | "ResultShown";

export type BrushMode = "draw" | "erase";

export const BRUSH_MIN = 1;
export const BRUSH_MAX = 50;
export const ROI_NATIVE_SIZE = 100;

export interface Roi {
  /** display-space top-left corner, integer pixels */
  displayX: number;
  displayY: number;
  /** display-space edge length: ROI_NATIVE_SIZE * scale */
  displayExtent: number;
  /** native-space top-left voxel of the 100x100 footprint */
  nativeX: number;
  nativeY: number;
  scale: number;
}

export interface WorkflowState {
  phase: Phase;
  roi: Roi | null;
  sliceIndex: number;
  sliceCount: number;
  brush: { size: number; mode: BrushMode };
}

export type UiEvent =
  | { kind: "startRoi" }
  | { kind: "placeRoi"; clickX: number; clickY: number }
  | { kind: "confirmRoi" }
  | { kind: "startMasking" }
  | { kind: "stroke" }
  | { kind: "setBrushSize"; size: number }
  | { kind: "setBrushMode"; mode: BrushMode }
  | { kind: "setSlice"; index: number }
  | { kind: "execute"; maskNonEmpty: boolean }
  | { kind: "resolveSuccess" }
  | { kind: "resolveError" }
  | { kind: "revise" }
  | { kind: "reset" };

export interface DisplayGeometry {
  /** display-space size of the rendered slice */
  displayWidth: number;
  displayHeight: number;
  scale: number;
}

export function initialState(sliceCount: number): WorkflowState {
  return {
    phase: "Idle",
    roi: null,
    sliceIndex: 0,
    sliceCount,
    brush: { size: 10, mode: "draw" },
  };
}

function clamp(v: number, lo: number, hi: number): number {
  return Math.min(hi, Math.max(lo, v));
}

/**
 * A click places the ROI centered on it, clamped so the whole display
 * rectangle (and therefore the whole 100x100 native footprint) stays
 * inside the slice. The corner snaps to the native pixel grid, so the
 * rectangle covers exactly 100x100 native pixels and the writeback
 * origin matches what the user saw (no sub-voxel displacement).
 */
export function roiFromClick(clickX: number, clickY: number, geom: DisplayGeometry): Roi {
  const extent = ROI_NATIVE_SIZE * geom.scale;
  const nativeW = Math.round(geom.displayWidth / geom.scale);
  const nativeH = Math.round(geom.displayHeight / geom.scale);
  const nativeX = clamp(
    Math.round((clickX - extent / 2) / geom.scale), 0, Math.max(0, nativeW - ROI_NATIVE_SIZE),
  );
  const nativeY = clamp(
    Math.round((clickY - extent / 2) / geom.scale), 0, Math.max(0, nativeH - ROI_NATIVE_SIZE),
  );
  return {
    displayX: Math.round(nativeX * geom.scale),
    displayY: Math.round(nativeY * geom.scale),
    displayExtent: extent,
    nativeX,
    nativeY,
    scale: geom.scale,
  };
}

/**
 * Apply one event. Illegal events return the state unchanged (no-op),
 * so arbitrary event streams can never corrupt the workflow.
 */
export function transition(
  state: WorkflowState,
  event: UiEvent,
  geom?: DisplayGeometry,
): WorkflowState {
  switch (event.kind) {
    case "reset":
      return { ...initialState(state.sliceCount), brush: state.brush };

    case "startRoi":
      return state.phase === "Idle" ? { ...state, phase: "RoiPlacing" } : state;

    case "placeRoi":
      if (state.phase !== "RoiPlacing" || !geom) return state;
      return { ...state, roi: roiFromClick(event.clickX, event.clickY, geom) };

    case "confirmRoi":
      if (state.phase !== "RoiPlacing" || state.roi === null) return state;
      return { ...state, phase: "RoiLocked" };

    case "startMasking":
      return state.phase === "RoiLocked" ? { ...state, phase: "Masking" } : state;

    case "stroke":
      // strokes mutate layers, not workflow state; the controller applies
      // them only in the Masking phase (see strokeAllowed)
      return state;

    case "setBrushSize":
      return {
        ...state,
        brush: { ...state.brush, size: clamp(Math.round(event.size), BRUSH_MIN, BRUSH_MAX) },
      };

    case "setBrushMode":
      return { ...state, brush: { ...state.brush, mode: event.mode } };

    case "setSlice": {
      if (state.phase === "Processing" || state.phase === "ResultShown") return state;
      const index = clamp(Math.round(event.index), 0, state.sliceCount - 1);
      return { ...state, sliceIndex: index };
    }

    case "execute":
      if (state.phase !== "Masking" || !event.maskNonEmpty) return state;
      return { ...state, phase: "Processing" };

    case "resolveSuccess":
      return state.phase === "Processing" ? { ...state, phase: "ResultShown" } : state;

    case "resolveError":
      return state.phase === "Processing" ? { ...state, phase: "Masking" } : state;

    case "revise":
      return state.phase === "ResultShown" ? { ...state, phase: "Masking" } : state;
  }
}

export function strokeAllowed(state: WorkflowState): boolean {
  return state.phase === "Masking";
}

/** Structural invariants that must hold after any event sequence. */
export function stateInvariantViolation(state: WorkflowState): string | null {
  const phases: Phase[] = [
    "Idle", "RoiPlacing", "RoiLocked", "Masking", "Processing", "ResultShown",
  ];
  if (!phases.includes(state.phase)) return `unknown phase ${state.phase}`;
  const needsRoi: Phase[] = ["RoiLocked", "Masking", "Processing", "ResultShown"];
  if (needsRoi.includes(state.phase) && state.roi === null) {
    return `phase ${state.phase} without a ROI`;
  }
  if (state.phase === "Idle" && state.roi !== null) return "Idle with a ROI";
  if (state.brush.size < BRUSH_MIN || state.brush.size > BRUSH_MAX) {
    return `brush size ${state.brush.size} out of range`;
  }
  if (state.sliceIndex < 0 || state.sliceIndex >= state.sliceCount) {
    return `slice index ${state.sliceIndex} out of range`;
  }
  if (state.roi !== null) {
    if (state.roi.displayExtent !== ROI_NATIVE_SIZE * state.roi.scale) {
      return "ROI display extent inconsistent with scale";
    }
  }
  return null;
}
