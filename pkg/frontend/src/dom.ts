/** DOM wiring: sliders, Seed/Reset buttons, output images, error toast. */

import { ExplorerCore } from "./state.js";
import { SLIDER_MAX, SLIDER_MIN, SLIDER_STEP, SliderGroup } from "./sliders.js";

export interface ExplorerView {
  sliderInputs: HTMLInputElement[];
  seedButton: HTMLButtonElement;
  resetButton: HTMLButtonElement;
  outputsContainer: HTMLElement;
  toast: HTMLElement;
}

export function renderExplorer(
  container: HTMLElement,
  core: ExplorerCore,
  groups: SliderGroup[],
  title: string,
): ExplorerView {
  container.innerHTML = `
    <header class="explorer-header">
      <h1>${escapeHtml(title)}</h1>
      <p class="meta">${core.modelId} &middot; latent dim ${core.latentDim} &middot; ${groups.length} sliders</p>
    </header>
    <div class="explorer-body">
      <aside class="controls">
        <div class="sliders"></div>
        <div class="buttons">
          <button class="seed" type="button">Seed</button>
          <button class="reset" type="button">Reset</button>
        </div>
      </aside>
      <main class="outputs"></main>
    </div>
    <div class="toast hidden"></div>
  `;

  const slidersHost = container.querySelector<HTMLElement>(".sliders")!;
  const sliderInputs: HTMLInputElement[] = [];
  for (const group of groups) {
    const row = document.createElement("label");
    row.className = "slider-row";
    const caption = document.createElement("span");
    caption.textContent = `z[${group.start}..${group.start + group.size - 1}]`;
    const input = document.createElement("input");
    input.type = "range";
    input.min = String(SLIDER_MIN);
    input.max = String(SLIDER_MAX);
    input.step = String(SLIDER_STEP);
    input.value = "0";
    input.dataset.groupIndex = String(group.groupIndex);
    input.addEventListener("input", () => {
      core.setGroupValue(group, Number(input.value));
    });
    row.append(caption, input);
    slidersHost.append(row);
    sliderInputs.push(input);
  }

  const view: ExplorerView = {
    sliderInputs,
    seedButton: container.querySelector<HTMLButtonElement>("button.seed")!,
    resetButton: container.querySelector<HTMLButtonElement>("button.reset")!,
    outputsContainer: container.querySelector<HTMLElement>(".outputs")!,
    toast: container.querySelector<HTMLElement>(".toast")!,
  };

  view.seedButton.addEventListener("click", () => {
    if (core.seed()) {
      // sliders no longer describe the freshly drawn random vector
      for (const input of sliderInputs) {
        input.value = "0";
      }
    }
  });
  view.resetButton.addEventListener("click", () => core.reset());

  return view;
}

export function showOutputs(view: ExplorerView, outputs: Record<string, string>): void {
  for (const [kind, base64] of Object.entries(outputs)) {
    let figure = view.outputsContainer.querySelector<HTMLElement>(`figure[data-kind="${kind}"]`);
    if (!figure) {
      figure = document.createElement("figure");
      figure.dataset.kind = kind;
      const img = document.createElement("img");
      img.alt = kind;
      const caption = document.createElement("figcaption");
      caption.textContent = kind;
      figure.append(img, caption);
      view.outputsContainer.append(figure);
    }
    figure.querySelector("img")!.src = `data:image/png;base64,${base64}`;
  }
}

export function showToast(view: ExplorerView, message: string): void {
  view.toast.textContent = message;
  view.toast.classList.remove("hidden");
  setTimeout(() => view.toast.classList.add("hidden"), 4000);
}

export function setBusy(view: ExplorerView, busy: boolean): void {
  view.seedButton.disabled = busy;
  view.resetButton.disabled = busy;
}

function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}
