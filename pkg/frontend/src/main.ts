/** Entry point: read query params, wire the state machine to the DOM. */

import { ExplorerApi } from "./api.js";
import { ExplorerCore } from "./state.js";
import { groupSliders } from "./sliders.js";
import { renderExplorer, setBusy, showOutputs, showToast } from "./dom.js";

const DEFAULT_SLIDER_GROUPER = 10;

function fail(container: HTMLElement, message: string): void {
  container.innerHTML = `<div class="fatal">${message}</div>`;
}

async function boot(): Promise<void> {
  const container = document.getElementById("app");
  if (!container) {
    return;
  }
  const params = new URLSearchParams(window.location.search);
  const modelId = params.get("model_id");
  const latentDim = Number(params.get("latent_dim"));
  const grouper = Number(params.get("slider_grouper") ?? DEFAULT_SLIDER_GROUPER);

  if (!modelId) {
    fail(container, "Missing ?model_id=… — launch via <code>genhub explore MODEL_ID</code>.");
    return;
  }
  if (!Number.isInteger(latentDim) || latentDim <= 0) {
    fail(container, "Missing or invalid ?latent_dim=… — launch via <code>genhub explore MODEL_ID</code>.");
    return;
  }

  const api = new ExplorerApi("");
  let title = modelId;
  try {
    title = (await api.fetchModel(modelId)).title;
  } catch (error) {
    fail(container, `Cannot load model metadata: ${error instanceof Error ? error.message : error}`);
    return;
  }

  const groups = groupSliders(latentDim, Number.isInteger(grouper) && grouper > 0 ? grouper : DEFAULT_SLIDER_GROUPER);
  const core = new ExplorerCore({
    modelId,
    latentDim,
    api,
    callbacks: {
      onOutputs: (outputs) => showOutputs(view, outputs),
      onError: (message) => showToast(view, message),
      onBusyChange: (busy) => setBusy(view, busy),
    },
  });
  const view = renderExplorer(container, core, groups, title);
  core.seed(); // show something immediately
}

void boot();
