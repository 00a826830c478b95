/** Typed client for the verification server's JSON API. */

export type Choice = "true" | "false" | "not_sure";

export interface NextUnit {
  unit_id: string;
  prompt: string;
  image_ref: string;
  votes_recorded: number;
  required_votes: number;
}

export interface VoteRequest {
  unit_id: string;
  annotator_id: string;
  choice: Choice | null;
  invalid_flag: boolean;
}

export interface Progress {
  units_total: number;
  units_complete: number;
  units_open: number;
  votes_total: number;
  votes_needed: number;
}

export interface CleanTestExport {
  size: number;
  allowCount: number;
  records: Array<{ id: string; label: string; split: string }>;
}

export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(detail);
    this.name = "ApiError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function errorDetail(res: Response): Promise<string> {
  try {
    const body = (await res.json()) as { detail?: string };
    return body.detail ?? res.statusText;
  } catch {
    return res.statusText;
  }
}

export class Client {
  private fetchFn: FetchLike;

  constructor(private baseUrl = "", fetchFn?: FetchLike) {
    // bind lazily so a global fetch polyfill installed later still works
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  /** Next open unit for this annotator, or null when every unit is done. */
  async nextUnit(annotatorId: string): Promise<NextUnit | null> {
    const url = `${this.baseUrl}/api/next?annotator=${encodeURIComponent(annotatorId)}`;
    const res = await this.fetchFn(url);
    if (res.status === 204) return null;
    if (!res.ok) throw new ApiError(res.status, await errorDetail(res));
    return (await res.json()) as NextUnit;
  }

  /** Returns the unit's vote count after this vote is durably recorded. */
  async vote(req: VoteRequest): Promise<number> {
    const res = await this.fetchFn(`${this.baseUrl}/api/vote`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(req),
    });
    if (!res.ok) throw new ApiError(res.status, await errorDetail(res));
    const body = (await res.json()) as { votes_recorded: number };
    return body.votes_recorded;
  }

  async progress(): Promise<Progress> {
    const res = await this.fetchFn(`${this.baseUrl}/api/progress`);
    if (!res.ok) throw new ApiError(res.status, await errorDetail(res));
    return (await res.json()) as Progress;
  }

  async exportCleanTest(): Promise<CleanTestExport> {
    const res = await this.fetchFn(`${this.baseUrl}/api/export/clean-test`);
    if (!res.ok) throw new ApiError(res.status, await errorDetail(res));
    const text = await res.text();
    const records = text
      .split("\n")
      .filter((line) => line.trim() !== "")
      .map((line) => JSON.parse(line) as { id: string; label: string; split: string });
    return {
      size: Number(res.headers.get("x-clean-test-size") ?? "0"),
      allowCount: Number(res.headers.get("x-allow-count") ?? "0"),
      records,
    };
  }
}
