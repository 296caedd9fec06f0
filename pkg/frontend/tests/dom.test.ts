// @vitest-environment jsdom
import { describe, expect, it } from "vitest";

import type { ExploreResponse } from "../dist/api.js";
import { ExplorerCore } from "../dist/state.js";
import { groupSliders } from "../dist/sliders.js";
import { renderExplorer, setBusy, showOutputs, showToast } from "../dist/dom.js";

class StubApi {
  payloads: number[][] = [];

  async explore(modelId: string, latentVector: number[]): Promise<ExploreResponse> {
    this.payloads.push([...latentVector]);
    return {
      model_id: modelId,
      outputs: { image: "aGVsbG8=" },
      seed_used: 1,
      latent_echo: latentVector,
    };
  }
}

function build(latentDim = 100, grouper = 10) {
  const api = new StubApi();
  const core = new ExplorerCore({
    modelId: "00002_TOY_FULL",
    latentDim,
    api: api as never,
    debounceMs: 1,
  });
  const container = document.createElement("div");
  document.body.append(container);
  const groups = groupSliders(latentDim, grouper);
  const view = renderExplorer(container, core, groups, "Toy full-field model");
  return { api, core, view, container, groups };
}

describe("renderExplorer", () => {
  it("renders one range input per slider group and announces the count", () => {
    const { view, container } = build(100, 10);
    expect(view.sliderInputs).toHaveLength(10);
    expect(container.textContent).toContain("10 sliders");
    expect(container.textContent).toContain("latent dim 100");
  });

  it("routes slider input events into the core", async () => {
    const { api, core, view } = build(20, 10);
    view.sliderInputs[0].value = "0.5";
    view.sliderInputs[0].dispatchEvent(new Event("input"));
    await core.whenIdle();
    expect(api.payloads).toHaveLength(1);
    expect(api.payloads[0].slice(0, 10).every((v) => v === 0.5)).toBe(true);
  });

  it("seed button triggers a request and resets slider knobs", async () => {
    const { api, core, view } = build(20, 10);
    view.sliderInputs[1].value = "2";
    view.sliderInputs[1].dispatchEvent(new Event("input"));
    await core.whenIdle();
    view.seedButton.click();
    await core.whenIdle();
    expect(api.payloads.length).toBe(2);
    expect(view.sliderInputs[1].value).toBe("0");
  });

  it("shows outputs as data-URI images and toasts errors", () => {
    const { view } = build(20, 10);
    showOutputs(view, { image: "QUJD", mask: "REVG" });
    const images = view.outputsContainer.querySelectorAll("img");
    expect(images).toHaveLength(2);
    expect(images[0].src).toContain("data:image/png;base64,");

    showToast(view, "boom");
    expect(view.toast.classList.contains("hidden")).toBe(false);
    expect(view.toast.textContent).toBe("boom");

    setBusy(view, true);
    expect(view.seedButton.disabled).toBe(true);
    setBusy(view, false);
    expect(view.resetButton.disabled).toBe(false);
  });
});
