// The wire: every request is POST /api with {"method","session","params"}.

export class ApiError extends Error {
  constructor(public code: string, message: string) {
    super(message || code);
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class RpcApi {
  constructor(private baseUrl: string = "", private fetchFn?: FetchLike) {}

  async call(method: string, session: string, params: Record<string, unknown>): Promise<any> {
    const doFetch = this.fetchFn ?? fetch;
    let reply: Response;
    try {
      reply = await doFetch(`${this.baseUrl}/api`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ method, session, params }),
      });
    } catch (err) {
      throw new ApiError("ConnectFailed", String(err));
    }
    if (!reply.ok) throw new ApiError("ConnectFailed", `HTTP ${reply.status}`);
    const body = await reply.json();
    if (body.ok) return body.result;
    throw new ApiError(body.error?.code ?? "Internal", body.error?.message ?? "");
  }
}

export function isConnectFailure(err: unknown): boolean {
  return err instanceof ApiError && err.code === "ConnectFailed";
}
