/**
 * Typed client for the relighting service API.
 *
 * All rendering happens server-side; the client only moves PNG blobs and
 * 27-float lighting arrays.
 */

export interface DecomposeResponse {
  session_id: string;
  lighting: number[];
  urls: Record<string, string>;
}

export interface TransferResponse {
  lighting: number[];
  relit_url: string;
}

export class ApiError extends Error {
  constructor(message: string, readonly status: number, readonly errorId?: string) {
    super(message);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function raiseForStatus(resp: Response): Promise<void> {
  if (resp.ok) return;
  let detail = `HTTP ${resp.status}`;
  let errorId: string | undefined;
  try {
    const body = await resp.json();
    if (typeof body.detail === "string") detail = body.detail;
    if (typeof body.error_id === "string") {
      errorId = body.error_id;
      detail = `server error ${errorId}`;
    }
  } catch {
    // non-JSON error body; keep the status line
  }
  throw new ApiError(detail, resp.status, errorId);
}

export class ApiClient {
  constructor(private base = "", private fetchImpl: FetchLike =
      (input, init) => fetch(input, init)) {}

  async decompose(image: Blob, mask?: Blob,
                  space: "srgb" | "linear" = "srgb"): Promise<DecomposeResponse> {
    const form = new FormData();
    form.append("image", image, "image.png");
    if (mask) form.append("mask", mask, "mask.png");
    form.append("space", space);
    const resp = await this.fetchImpl(`${this.base}/api/decompose`,
                                      { method: "POST", body: form });
    await raiseForStatus(resp);
    return resp.json();
  }

  async relight(sessionId: string, lighting: number[]): Promise<Blob> {
    const resp = await this.fetchImpl(`${this.base}/api/relight`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ session_id: sessionId, lighting }),
    });
    await raiseForStatus(resp);
    return resp.blob();
  }

  async transfer(sessionId: string, reference: Blob,
                 space: "srgb" | "linear" = "srgb"): Promise<TransferResponse> {
    const form = new FormData();
    form.append("source_session_id", sessionId);
    form.append("reference", reference, "reference.png");
    form.append("space", space);
    const resp = await this.fetchImpl(`${this.base}/api/transfer`,
                                      { method: "POST", body: form });
    await raiseForStatus(resp);
    return resp.json();
  }

  async fetchArtifact(url: string): Promise<Blob> {
    const resp = await this.fetchImpl(`${this.base}${url}`);
    await raiseForStatus(resp);
    return resp.blob();
  }

  async health(): Promise<{ status: string; version: string }> {
    const resp = await this.fetchImpl(`${this.base}/api/health`);
    await raiseForStatus(resp);
    return resp.json();
  }
}
