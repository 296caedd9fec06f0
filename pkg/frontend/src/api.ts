/** Thin client for the two service endpoints the explorer talks to. */

export interface ModelDescription {
  model_id: string;
  title: string;
}

export interface ExploreResponse {
  model_id: string;
  outputs: Record<string, string>; // kind -> base64 PNG
  seed_used: number;
  latent_echo: number[];
}

export class ApiError extends Error {
  constructor(message: string, readonly code: string = "internal") {
    super(message);
  }
}

async function parseError(response: Response): Promise<ApiError> {
  try {
    const payload = (await response.json()) as { error?: { code?: string; message?: string } };
    return new ApiError(
      payload.error?.message ?? `request failed with status ${response.status}`,
      payload.error?.code ?? "internal",
    );
  } catch {
    return new ApiError(`request failed with status ${response.status}`);
  }
}

export class ExplorerApi {
  constructor(private readonly baseUrl: string = "") {}

  async fetchModel(modelId: string): Promise<ModelDescription> {
    const response = await fetch(`${this.baseUrl}/v1/models/${encodeURIComponent(modelId)}`);
    if (!response.ok) {
      throw await parseError(response);
    }
    const payload = (await response.json()) as {
      model_id: string;
      description?: { title?: string };
    };
    return { model_id: payload.model_id, title: payload.description?.title ?? payload.model_id };
  }

  async explore(
    modelId: string,
    latentVector: number[],
    condition?: string,
  ): Promise<ExploreResponse> {
    const body: Record<string, unknown> = { latent_vector: latentVector };
    if (condition !== undefined) {
      body.condition = condition;
    }
    const response = await fetch(
      `${this.baseUrl}/v1/models/${encodeURIComponent(modelId)}/explore`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
      },
    );
    if (!response.ok) {
      throw await parseError(response);
    }
    return (await response.json()) as ExploreResponse;
  }
}
