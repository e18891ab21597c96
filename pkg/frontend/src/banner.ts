/** Non-blocking failure banner: announces a problem, leaves the view alone. */

export class Banner {
  readonly root: HTMLElement;
  private readonly message: HTMLElement;

  constructor(parent: HTMLElement) {
    this.root = document.createElement("div");
    this.root.className = "banner";
    this.root.hidden = true;
    this.message = document.createElement("span");
    const dismiss = document.createElement("button");
    dismiss.type = "button";
    dismiss.textContent = "dismiss";
    dismiss.addEventListener("click", () => this.hide());
    this.root.append(this.message, dismiss);
    parent.appendChild(this.root);
  }

  show(text: string): void {
    this.message.textContent = text;
    this.root.hidden = false;
  }

  hide(): void {
    this.root.hidden = true;
  }

  get visible(): boolean {
    return !this.root.hidden;
  }

  get text(): string {
    return this.message.textContent ?? "";
  }
}
