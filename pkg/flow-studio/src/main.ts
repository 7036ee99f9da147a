/**
 * DOM wiring for the arrow-authoring panel.
 *
 * Layout: a drawing canvas over the reference image, three preview panels
 * (sparse arrows are drawn locally as overlay graphics only; dense and
 * refined fields render service-returned PPM bytes), parameter controls,
 * spec import/export, and a clip player.
 */

import { Session, fetchTransport } from "./session.js";
import { base64ToBytes, decodePpm } from "./ppm.js";

const SERVICE_BASE = "";

interface Elements {
  fileInput: HTMLInputElement;
  drawCanvas: HTMLCanvasElement;
  densePanel: HTMLCanvasElement;
  refinedPanel: HTMLCanvasElement;
  clipPanel: HTMLCanvasElement;
  strengthSlider: HTMLInputElement;
  strengthValue: HTMLSpanElement;
  arrowStrength: HTMLInputElement;
  banner: HTMLDivElement;
  status: HTMLDivElement;
  gestureList: HTMLUListElement;
  exportButton: HTMLButtonElement;
  importInput: HTMLInputElement;
  clearButton: HTMLButtonElement;
  sampleButton: HTMLButtonElement;
  seedInput: HTMLInputElement;
  framesInput: HTMLInputElement;
  reportBox: HTMLPreElement;
}

function toImageData(b64ppm: string): ImageData {
  const img = decodePpm(base64ToBytes(b64ppm));
  const pixels = new Uint8ClampedArray(img.rgba.length); // ArrayBuffer-backed copy
  pixels.set(img.rgba);
  return new ImageData(pixels, img.width, img.height);
}

function element<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (!found) throw new Error(`missing element #${id}`);
  return found as T;
}

function collectElements(): Elements {
  return {
    fileInput: element("file-input"),
    drawCanvas: element("draw-canvas"),
    densePanel: element("dense-panel"),
    refinedPanel: element("refined-panel"),
    clipPanel: element("clip-panel"),
    strengthSlider: element("strength-slider"),
    strengthValue: element("strength-value"),
    arrowStrength: element("arrow-strength"),
    banner: element("banner"),
    status: element("status"),
    gestureList: element("gesture-list"),
    exportButton: element("export-button"),
    importInput: element("import-input"),
    clearButton: element("clear-button"),
    sampleButton: element("sample-button"),
    seedInput: element("seed-input"),
    framesInput: element("frames-input"),
    reportBox: element("report-box"),
  };
}

class App {
  private session: Session | null = null;
  private image: HTMLImageElement | null = null;
  private dragStart: [number, number] | null = null;
  private dragCurrent: [number, number] | null = null;
  private clipFrames: ImageData[] = [];
  private clipIndex = 0;
  private clipTimer: ReturnType<typeof setInterval> | null = null;

  constructor(private el: Elements) {
    el.fileInput.addEventListener("change", () => this.loadImage());
    el.drawCanvas.addEventListener("mousedown", (e) => this.beginDrag(e));
    el.drawCanvas.addEventListener("mousemove", (e) => this.moveDrag(e));
    el.drawCanvas.addEventListener("mouseup", (e) => this.endDrag(e));
    el.drawCanvas.addEventListener("mouseleave", () => this.cancelDrag());
    el.strengthSlider.addEventListener("input", () => {
      const value = Number(el.strengthSlider.value);
      el.strengthValue.textContent = value.toFixed(2);
      this.session?.setGlobalStrength(value);
    });
    el.clearButton.addEventListener("click", () => this.session?.clearGestures());
    el.exportButton.addEventListener("click", () => this.downloadSpec());
    el.importInput.addEventListener("change", () => this.importSpecFile());
    el.sampleButton.addEventListener("click", () => void this.requestClip());
  }

  private loadImage(): void {
    const file = this.el.fileInput.files?.[0];
    if (!file) return;
    const url = URL.createObjectURL(file);
    const img = new Image();
    img.onload = () => {
      this.image = img;
      this.session = new Session({
        width: img.naturalWidth,
        height: img.naturalHeight,
        transport: fetchTransport(SERVICE_BASE),
        onChange: () => this.render(),
      });
      this.el.drawCanvas.width = img.naturalWidth;
      this.el.drawCanvas.height = img.naturalHeight;
      this.render();
      URL.revokeObjectURL(url);
    };
    img.src = url;
  }

  private canvasPoint(e: MouseEvent): [number, number] {
    const rect = this.el.drawCanvas.getBoundingClientRect();
    const scaleX = this.el.drawCanvas.width / rect.width;
    const scaleY = this.el.drawCanvas.height / rect.height;
    return [(e.clientX - rect.left) * scaleX, (e.clientY - rect.top) * scaleY];
  }

  private beginDrag(e: MouseEvent): void {
    if (!this.session) return;
    this.dragStart = this.canvasPoint(e);
    this.dragCurrent = this.dragStart;
  }

  private moveDrag(e: MouseEvent): void {
    if (!this.dragStart) return;
    this.dragCurrent = this.canvasPoint(e);
    this.render();
  }

  private endDrag(e: MouseEvent): void {
    if (!this.session || !this.dragStart) return;
    const start = this.dragStart;
    const end = this.canvasPoint(e);
    this.dragStart = this.dragCurrent = null;
    const problem = this.session.addGesture(start, end, Number(this.el.arrowStrength.value));
    this.el.status.textContent = problem ?? "";
    this.render();
  }

  private cancelDrag(): void {
    this.dragStart = this.dragCurrent = null;
    this.render();
  }

  private downloadSpec(): void {
    if (!this.session) return;
    const blob = new Blob([JSON.stringify(this.session.exportSpec(), null, 2)], {
      type: "application/json",
    });
    const link = document.createElement("a");
    link.href = URL.createObjectURL(blob);
    link.download = "arrows.json";
    link.click();
    URL.revokeObjectURL(link.href);
  }

  private importSpecFile(): void {
    const file = this.el.importInput.files?.[0];
    if (!file || !this.session) return;
    void file.text().then((text) => {
      try {
        this.session?.importSpecDoc(JSON.parse(text));
        this.el.status.textContent = "";
      } catch (err) {
        this.el.status.textContent = String(err);
      }
    });
  }

  private async requestClip(): Promise<void> {
    if (!this.session) return;
    const result = await this.session.requestClip(
      Number(this.el.seedInput.value),
      Number(this.el.framesInput.value),
    );
    if (result) {
      this.clipFrames = result.frames.map((b64) => toImageData(b64));
      this.el.reportBox.textContent = JSON.stringify(result.report, null, 2);
      this.playClip();
    }
  }

  private playClip(): void {
    if (this.clipTimer !== null) clearInterval(this.clipTimer);
    this.clipIndex = 0;
    this.clipTimer = setInterval(() => {
      if (this.clipFrames.length === 0) return;
      const frame = this.clipFrames[this.clipIndex % this.clipFrames.length];
      this.paintImageData(this.el.clipPanel, frame);
      this.clipIndex++;
    }, 200);
  }

  private paintImageData(canvas: HTMLCanvasElement, data: ImageData): void {
    canvas.width = data.width;
    canvas.height = data.height;
    canvas.getContext("2d")?.putImageData(data, 0, 0);
  }

  private paintPreview(canvas: HTMLCanvasElement, b64ppm: string | null): void {
    if (!b64ppm) return;
    this.paintImageData(canvas, toImageData(b64ppm));
  }

  private render(): void {
    const session = this.session;
    const ctx = this.el.drawCanvas.getContext("2d");
    if (!ctx || !session) return;
    ctx.clearRect(0, 0, this.el.drawCanvas.width, this.el.drawCanvas.height);
    if (this.image) ctx.drawImage(this.image, 0, 0);
    ctx.strokeStyle = "#ff3333";
    ctx.lineWidth = Math.max(1, this.el.drawCanvas.width / 128);
    for (const g of session.gestures) this.drawArrow(ctx, g.start, g.end);
    if (this.dragStart && this.dragCurrent) {
      ctx.strokeStyle = "#ffaa00";
      this.drawArrow(ctx, this.dragStart, this.dragCurrent);
    }

    this.paintPreview(this.el.densePanel, session.densePreview?.preview ?? null);
    this.paintPreview(this.el.refinedPanel, session.refinedPreview?.preview ?? null);
    const staleNote = session.previewsStale ? " (stale)" : "";
    this.el.banner.textContent = session.banner ?? "";
    this.el.banner.style.display = session.banner ? "block" : "none";
    this.el.gestureList.innerHTML = "";
    for (const g of session.gestures) {
      const item = document.createElement("li");
      item.textContent =
        `#${g.id} (${g.start[0]},${g.start[1]}) -> (${g.end[0]},${g.end[1]}) x${g.strength}` + staleNote;
      const remove = document.createElement("button");
      remove.textContent = "x";
      remove.addEventListener("click", () => session.removeGesture(g.id));
      item.appendChild(remove);
      this.el.gestureList.appendChild(item);
    }
  }

  private drawArrow(
    ctx: CanvasRenderingContext2D,
    start: [number, number],
    end: [number, number],
  ): void {
    const [x1, y1] = start;
    const [x2, y2] = end;
    ctx.beginPath();
    ctx.moveTo(x1, y1);
    ctx.lineTo(x2, y2);
    const angle = Math.atan2(y2 - y1, x2 - x1);
    const head = Math.max(3, ctx.lineWidth * 3);
    ctx.lineTo(x2 - head * Math.cos(angle - 0.5), y2 - head * Math.sin(angle - 0.5));
    ctx.moveTo(x2, y2);
    ctx.lineTo(x2 - head * Math.cos(angle + 0.5), y2 - head * Math.sin(angle + 0.5));
    ctx.stroke();
  }
}

if (typeof document !== "undefined" && document.getElementById("draw-canvas")) {
  new App(collectElements());
}
