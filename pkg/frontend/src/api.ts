// Typed client over the service's five endpoints.

export interface Config {
  d_z: number;
  image_dims: [number, number, number];
  k: number;
  categories: string[];
  methods: string[];
}

export interface SeedEncoding {
  item_id: number;
  tag: string;
  z: number[];
}

export interface SimilarItem {
  item_id: number;
  score: number;
  tag: string;
  cluster: number;
  thumbnail_ppm_base64: string;
}

export interface SimilarResponse {
  method: string;
  scoped: boolean;
  cluster: number | null;
  items: SimilarItem[];
}

export interface RecommendMatch {
  item_id: number;
  score: number;
  tag: string;
  thumbnail_ppm_base64: string;
}

export interface RecommendEntry {
  cluster: number;
  matches: RecommendMatch[];
}

export interface RecommendResponse {
  source_cluster: number;
  method: string;
  recommendations: RecommendEntry[];
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly base = "",
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async raise(response: Response): Promise<never> {
    let code = "http_error";
    let message = `${response.status} ${response.statusText}`;
    try {
      const body = (await response.json()) as { error?: { code: string; message: string } };
      if (body.error) {
        code = body.error.code;
        message = body.error.message;
      }
    } catch {
      // non-JSON error body; keep the status line
    }
    throw new ApiError(response.status, code, message);
  }

  private async getJson<T>(path: string): Promise<T> {
    const response = await this.fetchImpl(this.base + path);
    if (!response.ok) await this.raise(response);
    return (await response.json()) as T;
  }

  private async postJson<T>(path: string, payload: unknown): Promise<T> {
    const response = await this.fetchImpl(this.base + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
    if (!response.ok) await this.raise(response);
    return (await response.json()) as T;
  }

  config(): Promise<Config> {
    return this.getJson<Config>("/config");
  }

  seedEncoding(seed?: number): Promise<SeedEncoding> {
    const suffix = seed === undefined ? "" : `?seed=${seed}`;
    return this.getJson<SeedEncoding>(`/seed-encoding${suffix}`);
  }

  async decode(z: number[]): Promise<Uint8Array> {
    const response = await this.fetchImpl(this.base + "/decode", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ z }),
    });
    if (!response.ok) await this.raise(response);
    return new Uint8Array(await response.arrayBuffer());
  }

  similar(z: number[], method: string, k: number, scoped: boolean): Promise<SimilarResponse> {
    return this.postJson<SimilarResponse>("/similar", { z, method, k, scoped });
  }

  recommend(z: number[], method: string): Promise<RecommendResponse> {
    return this.postJson<RecommendResponse>("/recommend", { z, method });
  }
}
