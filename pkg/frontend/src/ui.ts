// DOM glue: renders the layer stack into real canvases and translates
// pointer/toolbar input into controller calls. Everything stateful about
// the workflow itself lives in the controller; this file only draws.

import { GatewayClient } from "./api.js";
import { Point } from "./layers.js";
import { Surface } from "./raster.js";
import { StudioController } from "./controller.js";

function surfaceToImageData(surface: Surface): ImageData {
  return new ImageData(
    new Uint8ClampedArray(surface.data),
    surface.width,
    surface.height,
  );
}

async function decodeSlicePng(png: Uint8Array): Promise<Surface> {
  const bitmap = await createImageBitmap(new Blob([png as BufferSource], { type: "image/png" }));
  const canvas = document.createElement("canvas");
  canvas.width = bitmap.width;
  canvas.height = bitmap.height;
  const ctx = canvas.getContext("2d")!;
  ctx.drawImage(bitmap, 0, 0);
  const data = ctx.getImageData(0, 0, bitmap.width, bitmap.height);
  return { width: data.width, height: data.height, data: data.data };
}

interface Elements {
  viewport: HTMLElement;
  base: HTMLCanvasElement;
  result: HTMLCanvasElement;
  mask: HTMLCanvasElement;
  cursor: HTMLCanvasElement;
  file: HTMLInputElement;
  slice: HTMLInputElement;
  sliceLabel: HTMLElement;
  windowInput: HTMLInputElement;
  levelInput: HTMLInputElement;
  brushSize: HTMLInputElement;
  brushMode: HTMLSelectElement;
  engine: HTMLSelectElement;
  placeRoi: HTMLButtonElement;
  confirmRoi: HTMLButtonElement;
  execute: HTMLButtonElement;
  revise: HTMLButtonElement;
  reset: HTMLButtonElement;
  savePng: HTMLButtonElement;
  writeback: HTMLButtonElement;
  status: HTMLElement;
}

function grab(): Elements {
  const byId = <T extends HTMLElement>(id: string) => document.getElementById(id) as T;
  return {
    viewport: byId("viewport"),
    base: byId("layer-base"),
    result: byId("layer-result"),
    mask: byId("layer-mask"),
    cursor: byId("layer-cursor"),
    file: byId("nrrd-file"),
    slice: byId("slice-slider"),
    sliceLabel: byId("slice-label"),
    windowInput: byId("window-input"),
    levelInput: byId("level-input"),
    brushSize: byId("brush-size"),
    brushMode: byId("brush-mode"),
    engine: byId("engine-select"),
    placeRoi: byId("btn-place-roi"),
    confirmRoi: byId("btn-confirm-roi"),
    execute: byId("btn-execute"),
    revise: byId("btn-revise"),
    reset: byId("btn-reset"),
    savePng: byId("btn-save-png"),
    writeback: byId("btn-writeback"),
    status: byId("status-line"),
  };
}

export class StudioUi {
  private controller: StudioController;
  private el: Elements;
  private pointerDown = false;
  private hover: Point | null = null;

  constructor(baseUrl: string, scale: number) {
    this.el = grab();
    this.controller = new StudioController(
      new GatewayClient(baseUrl),
      decodeSlicePng,
      { scale, windowLevel: { window: 400, level: 40 } },
    );
    this.wire();
    this.render();
  }

  private setStatus(text: string): void {
    this.el.status.textContent = text;
  }

  private wire(): void {
    const c = this.controller;

    this.el.file.addEventListener("change", async () => {
      const file = this.el.file.files?.[0];
      if (!file) return;
      try {
        this.setStatus("uploading volume...");
        const meta = await c.loadVolume(new Uint8Array(await file.arrayBuffer()));
        this.el.slice.max = String(meta.dims[2] - 1);
        this.el.slice.value = "0";
        this.resizeCanvases();
        this.setStatus(`volume ${meta.dims.join("x")} (${meta.voxel_type})`);
      } catch (err) {
        this.setStatus(`upload failed: ${err}`);
      }
      this.render();
    });

    this.el.slice.addEventListener("input", async () => {
      const k = Number(this.el.slice.value);
      if (c.state.phase === "Processing" || c.state.phase === "ResultShown") return;
      try {
        await c.showSlice(k);
      } catch (err) {
        this.setStatus(`slice fetch failed: ${err}`);
      }
      this.render();
    });

    const reloadSlice = async () => {
      if (!c.volume) return;
      const wl = c.options.windowLevel!;
      wl.window = Number(this.el.windowInput.value) || 400;
      wl.level = Number(this.el.levelInput.value) || 40;
      await c.showSlice(c.state.sliceIndex);
      this.render();
    };
    this.el.windowInput.addEventListener("change", reloadSlice);
    this.el.levelInput.addEventListener("change", reloadSlice);

    this.el.brushSize.addEventListener("input", () => {
      c.dispatch({ kind: "setBrushSize", size: Number(this.el.brushSize.value) });
    });
    this.el.brushMode.addEventListener("change", () => {
      c.dispatch({
        kind: "setBrushMode",
        mode: this.el.brushMode.value === "erase" ? "erase" : "draw",
      });
    });

    this.el.placeRoi.addEventListener("click", () => {
      c.dispatch({ kind: "startRoi" });
      this.setStatus("click on the slice to place the region of interest");
      this.render();
    });
    this.el.confirmRoi.addEventListener("click", () => {
      c.dispatch({ kind: "confirmRoi" });
      c.dispatch({ kind: "startMasking" });
      if (c.state.phase === "Masking") {
        this.setStatus("draw the mask with the brush (eraser available)");
      }
      this.render();
    });

    this.el.execute.addEventListener("click", async () => {
      if (c.state.phase !== "Masking") return;
      this.setStatus("processing...");
      this.render();
      const outcome = await c.executeAndApply();
      this.setStatus(outcome.ok ? "inpainting result shown" : `failed: ${outcome.error}`);
      this.render();
    });

    this.el.revise.addEventListener("click", () => {
      c.dispatch({ kind: "revise" });
      this.render();
    });
    this.el.reset.addEventListener("click", () => {
      c.dispatch({ kind: "reset" });
      c.layers.clearAllMasks();
      c.layers.clearResult();
      this.setStatus("workflow reset");
      this.render();
    });

    this.el.savePng.addEventListener("click", () => {
      try {
        const result = c.resultForDownload();
        const canvas = document.createElement("canvas");
        canvas.width = result.width;
        canvas.height = result.height;
        canvas.getContext("2d")!.putImageData(surfaceToImageData(result), 0, 0);
        canvas.toBlob((blob) => {
          if (!blob) return;
          const a = document.createElement("a");
          a.href = URL.createObjectURL(blob);
          a.download = "inpainted-roi.png";
          a.click();
          URL.revokeObjectURL(a.href);
        }, "image/png");
      } catch (err) {
        this.setStatus(String(err));
      }
    });

    this.el.writeback.addEventListener("click", async () => {
      try {
        await this.controller.writebackToVolume();
        this.setStatus("patch written; downloading updated volume");
        const a = document.createElement("a");
        a.href = this.controller.client.downloadUrl(this.controller.volume!.volume_id);
        a.download = "inpainted.nrrd";
        a.click();
      } catch (err) {
        this.setStatus(`writeback failed: ${err}`);
      }
    });

    const pointFrom = (ev: PointerEvent): Point => {
      const rect = this.el.cursor.getBoundingClientRect();
      return { x: ev.clientX - rect.left, y: ev.clientY - rect.top };
    };

    this.el.cursor.addEventListener("pointerdown", (ev) => {
      const p = pointFrom(ev);
      if (c.state.phase === "RoiPlacing") {
        c.dispatch({ kind: "placeRoi", clickX: p.x, clickY: p.y });
        this.render();
        return;
      }
      this.pointerDown = true;
      c.stroke([p]);
      this.render();
    });
    this.el.cursor.addEventListener("pointermove", (ev) => {
      const p = pointFrom(ev);
      this.hover = p;
      if (this.pointerDown) c.stroke([p]);
      this.render();
    });
    const up = () => {
      this.pointerDown = false;
      this.render();
    };
    this.el.cursor.addEventListener("pointerup", up);
    this.el.cursor.addEventListener("pointerleave", () => {
      this.hover = null;
      up();
    });

    this.el.engine.addEventListener("change", () => {
      this.controller.options.engine =
        this.el.engine.value === "default" ? undefined : this.el.engine.value;
    });
  }

  private resizeCanvases(): void {
    const { width, height } = this.controller.layers.base;
    for (const canvas of [this.el.base, this.el.result, this.el.mask, this.el.cursor]) {
      canvas.width = width;
      canvas.height = height;
    }
    this.el.viewport.style.width = `${width}px`;
    this.el.viewport.style.height = `${height}px`;
  }

  private render(): void {
    const c = this.controller;
    const layers = c.layers;
    if (this.el.base.width !== layers.base.width) this.resizeCanvases();

    this.el.base.getContext("2d")!.putImageData(surfaceToImageData(layers.base), 0, 0);
    this.el.result.getContext("2d")!.putImageData(surfaceToImageData(layers.result), 0, 0);
    this.el.mask
      .getContext("2d")!
      .putImageData(surfaceToImageData(layers.maskLayer(c.state.sliceIndex)), 0, 0);

    const ctx = this.el.cursor.getContext("2d")!;
    ctx.clearRect(0, 0, this.el.cursor.width, this.el.cursor.height);
    if (c.state.roi) {
      const roi = c.state.roi;
      ctx.strokeStyle = "red";
      ctx.lineWidth = 2;
      ctx.strokeRect(roi.displayX, roi.displayY, roi.displayExtent, roi.displayExtent);
    }
    if (this.hover && c.state.phase === "Masking") {
      ctx.strokeStyle = c.state.brush.mode === "draw" ? "rgba(255,0,0,0.8)" : "rgba(0,0,255,0.8)";
      ctx.lineWidth = 1;
      ctx.beginPath();
      ctx.arc(this.hover.x, this.hover.y, c.state.brush.size / 2, 0, Math.PI * 2);
      ctx.stroke();
    }

    this.el.sliceLabel.textContent = `slice ${c.state.sliceIndex}`;
    this.el.execute.disabled =
      c.state.phase !== "Masking" || c.maskedSliceIndex() === undefined;
    this.el.confirmRoi.disabled = c.state.phase !== "RoiPlacing" || c.state.roi === null;
    this.el.savePng.disabled = c.state.phase !== "ResultShown";
    this.el.writeback.disabled = c.state.phase !== "ResultShown";
    this.el.revise.disabled = c.state.phase !== "ResultShown";
  }
}
