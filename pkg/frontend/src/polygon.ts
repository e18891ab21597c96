/** Control-polygon editor over one scatterplot panel.
 *
 * Clicks on the armed overlay append vertices; the polygon closes
 * implicitly (last vertex joins the first). Submission stays disabled
 * until three vertices exist, and drawing never touches server state:
 * the only write is the explicit submit.
 */

export interface PolygonToolHandlers {
  toWindow: (px: number, py: number) => [number, number];
  onSubmit: (polygon: Array<[number, number]>) => void;
  onArmed: () => void;
}

export class PolygonTool {
  readonly bar: HTMLElement;
  readonly submitButton: HTMLButtonElement;
  readonly validation: HTMLElement;
  private readonly armButton: HTMLButtonElement;
  private readonly clearButton: HTMLButtonElement;
  private pixels: Array<[number, number]> = [];
  private armed = false;

  constructor(
    private readonly overlay: HTMLCanvasElement,
    private readonly handlers: PolygonToolHandlers,
  ) {
    this.bar = document.createElement("div");
    this.bar.className = "polygon-bar";

    this.armButton = document.createElement("button");
    this.armButton.type = "button";
    this.armButton.className = "polygon-arm";
    this.armButton.textContent = "draw polygon";

    this.submitButton = document.createElement("button");
    this.submitButton.type = "button";
    this.submitButton.className = "polygon-submit";
    this.submitButton.textContent = "extract fiber surface";
    this.submitButton.disabled = true;

    this.clearButton = document.createElement("button");
    this.clearButton.type = "button";
    this.clearButton.className = "polygon-clear";
    this.clearButton.textContent = "clear";

    this.validation = document.createElement("span");
    this.validation.className = "polygon-validation";

    this.bar.append(
      this.armButton,
      this.submitButton,
      this.clearButton,
      this.validation,
    );

    this.armButton.addEventListener("click", () => {
      this.armed = true;
      this.overlay.classList.add("armed");
      this.handlers.onArmed();
    });
    this.clearButton.addEventListener("click", () => this.clear());
    this.submitButton.addEventListener("click", () => {
      if (this.submitButton.disabled) return;
      this.validation.textContent = "";
      this.handlers.onSubmit(this.windowPolygon());
    });
    this.overlay.addEventListener("click", (e) => this.handleClick(e));
  }

  get vertexCount(): number {
    return this.pixels.length;
  }

  windowPolygon(): Array<[number, number]> {
    return this.pixels.map(([px, py]) => this.handlers.toWindow(px, py));
  }

  /** Disarm and wipe, e.g. when another panel takes over drawing. */
  clear(): void {
    this.pixels = [];
    this.armed = false;
    this.overlay.classList.remove("armed");
    this.validation.textContent = "";
    this.submitButton.disabled = true;
    this.redraw();
  }

  showValidation(message: string): void {
    this.validation.textContent = message;
  }

  private handleClick(e: MouseEvent): void {
    if (!this.armed) return;
    const rect = this.overlay.getBoundingClientRect();
    this.pixels.push([e.clientX - rect.left, e.clientY - rect.top]);
    this.submitButton.disabled = this.pixels.length < 3;
    this.redraw();
  }

  private redraw(): void {
    const ctx = this.overlay.getContext("2d");
    if (!ctx) return;
    const { width, height } = this.overlay;
    ctx.clearRect(0, 0, width, height);
    if (this.pixels.length === 0) return;
    ctx.strokeStyle = "#1d4ed8";
    ctx.fillStyle = "#1d4ed8";
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    ctx.moveTo(this.pixels[0]![0], this.pixels[0]![1]);
    for (let i = 1; i < this.pixels.length; i++)
      ctx.lineTo(this.pixels[i]![0], this.pixels[i]![1]);
    if (this.pixels.length > 2) ctx.closePath();
    ctx.stroke();
    for (const [px, py] of this.pixels) {
      ctx.beginPath();
      ctx.arc(px, py, 3, 0, Math.PI * 2);
      ctx.fill();
    }
  }
}
