/** Typed client for the annotation service JSON API. */

export type PreHighlight = {
  start: number;
  end: number;
  source: "matcher" | "model";
  confidence: number | null;
};

export type Progress = { completed: number; total: number };

export type TaskPayload = {
  task_id: string;
  text: string;
  pre_highlights: PreHighlight[];
  method: "MANUAL" | "CORRECT" | "TEACH";
  iteration: number;
  progress: Progress;
};

export type Decision = "ACCEPT" | "REJECT" | "IGNORE";

export type SubmitBody = {
  task_id: string;
  decision: Decision;
  spans: { start: number; end: number }[] | null;
};

export type Receipt = {
  example_id: string | null;
  duplicate: boolean;
  skipped?: boolean;
  progress: Progress;
};

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }

  get stale(): boolean {
    return this.status === 409;
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class AnnotationApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = await response.json();
        if (body && typeof body.detail === "string") detail = body.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return response;
  }

  /** Head of the queue, or null when the queue is exhausted (204). */
  async nextTask(): Promise<TaskPayload | null> {
    const response = await this.request("/api/task/next");
    if (response.status === 204) return null;
    return (await response.json()) as TaskPayload;
  }

  async submit(body: SubmitBody): Promise<Receipt> {
    const response = await this.request("/api/task/submit", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    return (await response.json()) as Receipt;
  }

  async progress(): Promise<Record<string, unknown>> {
    const response = await this.request("/api/progress");
    return (await response.json()) as Record<string, unknown>;
  }
}
