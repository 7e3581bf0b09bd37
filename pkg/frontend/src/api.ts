// Typed client for the gateway's HTTP routes.

export interface VolumeMeta {
  volume_id: string;
  dims: [number, number, number]; // nx, ny, nz
  voxel_type: string;
}

export interface WindowLevel {
  window: number;
  level: number;
}

export class GatewayError extends Error {
  status: number;
  fields?: string[];

  constructor(status: number, message: string, fields?: string[]) {
    super(message);
    this.status = status;
    this.fields = fields;
  }
}

async function errorFrom(response: Response): Promise<GatewayError> {
  let message = `${response.status} ${response.statusText}`;
  let fields: string[] | undefined;
  try {
    const body = await response.json();
    if (body?.error) message = body.error;
    if (Array.isArray(body?.fields)) fields = body.fields;
  } catch {
    // non-JSON error body: keep the status line
  }
  return new GatewayError(response.status, message, fields);
}

export class GatewayClient {
  constructor(readonly baseUrl: string) {}

  async uploadVolume(bytes: ArrayBuffer | Uint8Array): Promise<VolumeMeta> {
    const response = await fetch(`${this.baseUrl}/volumes`, {
      method: "POST",
      headers: { "Content-Type": "application/octet-stream" },
      body: bytes as BodyInit,
    });
    if (!response.ok) throw await errorFrom(response);
    return (await response.json()) as VolumeMeta;
  }

  sliceUrl(volumeId: string, k: number, wl?: WindowLevel): string {
    const query = wl ? `?window=${wl.window}&level=${wl.level}` : "";
    return `${this.baseUrl}/volumes/${volumeId}/slices/${k}${query}`;
  }

  async fetchSlicePng(volumeId: string, k: number, wl?: WindowLevel): Promise<Uint8Array> {
    const response = await fetch(this.sliceUrl(volumeId, k, wl));
    if (!response.ok) throw await errorFrom(response);
    return new Uint8Array(await response.arrayBuffer());
  }

  async inpaint(
    uid: string,
    image: number[],
    mask: number[],
    engine?: string,
  ): Promise<number[]> {
    const params = new URLSearchParams({ uid });
    if (engine) params.set("engine", engine);
    const response = await fetch(`${this.baseUrl}/inpaint?${params}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ image, mask }),
    });
    if (!response.ok) throw await errorFrom(response);
    const body = await response.json();
    if (!Array.isArray(body.result) || body.result.length !== 40000) {
      throw new GatewayError(500, "malformed result payload");
    }
    return body.result as number[];
  }

  async applyPatch(
    volumeId: string,
    k: number,
    origin: [number, number],
    result: number[],
  ): Promise<void> {
    const response = await fetch(`${this.baseUrl}/volumes/${volumeId}/slices/${k}/patch`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ origin, result }),
    });
    if (!response.ok) throw await errorFrom(response);
  }

  downloadUrl(volumeId: string): string {
    return `${this.baseUrl}/volumes/${volumeId}/download`;
  }

  async downloadVolume(volumeId: string): Promise<Uint8Array> {
    const response = await fetch(this.downloadUrl(volumeId));
    if (!response.ok) throw await errorFrom(response);
    return new Uint8Array(await response.arrayBuffer());
  }
}
