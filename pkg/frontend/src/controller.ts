// Orchestration of the inpainting workflow: owns the state machine, the
// layer stack and the gateway client, and performs the side effects the
// pure transition function cannot. The DOM layer is responsible only for
// rendering surfaces and translating pointer/keyboard input into calls.

import { GatewayClient, VolumeMeta, WindowLevel } from "./api.js";
import { LayerStack, Point } from "./layers.js";
import { Surface, blit, surfaceFromFlat, surfaceFromGray, upsampleNearest } from "./raster.js";
import { buildRequest, InpaintRequestPayload } from "./request.js";
import {
  DisplayGeometry,
  ROI_NATIVE_SIZE,
  UiEvent,
  WorkflowState,
  initialState,
  strokeAllowed,
  transition,
} from "./state.js";

export interface StudioOptions {
  scale: number;
  engine?: string;
  windowLevel?: WindowLevel;
}

export interface ExecuteOutcome {
  ok: boolean;
  /** server debug text when ok is false */
  error?: string;
  /** the uid the request was sent under */
  uid?: string;
}

/** Decodes a slice PNG into a surface; the DOM layer uses createImageBitmap,
 * tests plug in their own decoder. */
export type SliceDecoder = (png: Uint8Array) => Promise<Surface>;

export class StudioController {
  state: WorkflowState;
  layers: LayerStack;
  readonly client: GatewayClient;
  readonly options: StudioOptions;
  volume: VolumeMeta | null = null;
  /** last inpaint result at native resolution, RGBA */
  lastResult: Surface | null = null;
  lastError: string | null = null;

  private decoder: SliceDecoder;
  private nativeWidth = 0;
  private nativeHeight = 0;

  constructor(client: GatewayClient, decoder: SliceDecoder, options: StudioOptions) {
    if (options.scale <= 0) throw new Error("scale must be positive");
    this.client = client;
    this.decoder = decoder;
    this.options = options;
    this.state = initialState(1);
    this.layers = new LayerStack(1, 1);
  }

  get geometry(): DisplayGeometry {
    return {
      displayWidth: Math.round(this.nativeWidth * this.options.scale),
      displayHeight: Math.round(this.nativeHeight * this.options.scale),
      scale: this.options.scale,
    };
  }

  dispatch(event: UiEvent): void {
    this.state = transition(this.state, event, this.geometry);
  }

  async loadVolume(bytes: Uint8Array | ArrayBuffer): Promise<VolumeMeta> {
    const meta = await this.client.uploadVolume(bytes);
    this.volume = meta;
    const [nx, ny, nz] = meta.dims;
    this.nativeWidth = nx;
    this.nativeHeight = ny;
    this.state = initialState(nz);
    this.layers = new LayerStack(
      Math.round(nx * this.options.scale),
      Math.round(ny * this.options.scale),
    );
    await this.showSlice(0);
    return meta;
  }

  /** Fetch a slice at native resolution and render it upscaled. */
  async showSlice(k: number): Promise<void> {
    if (!this.volume) throw new Error("no volume loaded");
    const png = await this.client.fetchSlicePng(this.volume.volume_id, k, this.options.windowLevel);
    const native = await this.decoder(png);
    blit(this.layers.base, upsampleNearest(native, this.options.scale), 0, 0);
    this.dispatch({ kind: "setSlice", index: k });
  }

  stroke(path: Point[]): void {
    if (!strokeAllowed(this.state)) return;
    this.layers.applyStroke(
      this.state.sliceIndex,
      path,
      this.state.brush.size,
      this.state.brush.mode,
    );
  }

  maskedSliceIndex(): number | undefined {
    return this.layers.findMaskedSlice();
  }

  /** The payload that would be sent right now (ROI crop of both layers). */
  buildRequestPayload(): InpaintRequestPayload {
    if (!this.state.roi) throw new Error("ROI not placed");
    const k = this.maskedSliceIndex();
    if (k === undefined) throw new Error("no mask drawn");
    return buildRequest(this.layers.base, this.layers.maskLayer(k), this.state.roi);
  }

  /**
   * Execute the inpainting: sends the request, keeps the workflow in
   * Processing until the response lands, then overlays the result on
   * the ROI rectangle (success) or surfaces the debug text (failure).
   */
  async executeAndApply(): Promise<ExecuteOutcome> {
    const roi = this.state.roi;
    if (this.state.phase !== "Masking" || !roi) {
      return { ok: false, error: "not in Masking phase" };
    }
    const k = this.maskedSliceIndex();
    if (k === undefined) return { ok: false, error: "no mask drawn" };

    const payload = this.buildRequestPayload();
    this.dispatch({ kind: "execute", maskNonEmpty: true });
    // re-read: dispatch mutates state behind the narrowed type
    const phase = (this.state as WorkflowState).phase;
    if (phase !== "Processing") {
      return { ok: false, error: "execute gate refused" };
    }
    try {
      const result = await this.client.inpaint(
        payload.uid, payload.image, payload.mask, this.options.engine,
      );
      const native = surfaceFromFlat(result, ROI_NATIVE_SIZE, ROI_NATIVE_SIZE);
      this.lastResult = native;
      blit(
        this.layers.result,
        upsampleNearest(native, roi.scale),
        roi.displayX,
        roi.displayY,
      );
      this.lastError = null;
      this.dispatch({ kind: "resolveSuccess" });
      return { ok: true, uid: payload.uid };
    } catch (err) {
      this.lastError = err instanceof Error ? err.message : String(err);
      this.dispatch({ kind: "resolveError" });
      return { ok: false, error: this.lastError, uid: payload.uid };
    }
  }

  /** 100x100 result pixels for the PNG download path. */
  resultForDownload(): Surface {
    if (this.state.phase !== "ResultShown" || !this.lastResult) {
      throw new Error("no result to download");
    }
    return this.lastResult;
  }

  /** Write the result back into the volume at the ROI's native origin. */
  async writebackToVolume(): Promise<void> {
    const roi = this.state.roi;
    if (this.state.phase !== "ResultShown" || !this.lastResult || !roi || !this.volume) {
      throw new Error("no result to write back");
    }
    const k = this.maskedSliceIndex();
    if (k === undefined) throw new Error("mask slice vanished");
    await this.client.applyPatch(
      this.volume.volume_id,
      k,
      [roi.nativeX, roi.nativeY],
      Array.from(this.lastResult.data),
    );
  }

  async downloadVolume(): Promise<Uint8Array> {
    if (!this.volume) throw new Error("no volume loaded");
    return this.client.downloadVolume(this.volume.volume_id);
  }

  /** Convenience for tests and the UI: a gray checkerboard-aware base setter. */
  setBaseFromNative(native: Surface): void {
    this.nativeWidth = native.width;
    this.nativeHeight = native.height;
    const scaled = upsampleNearest(native, this.options.scale);
    this.layers = new LayerStack(scaled.width, scaled.height);
    blit(this.layers.base, scaled, 0, 0);
  }

  setBaseGray(gray: Uint8Array, width: number, height: number): void {
    this.setBaseFromNative(surfaceFromGray(gray, width, height));
  }
}
