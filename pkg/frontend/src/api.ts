/**
 * Thin typed client for the study server's /v1 JSON API. All state lives
 * server-side; the client only holds the session token and in-flight
 * responses.
 */

export interface SessionInfo {
  token: string;
  workerState: string;
}

export interface QualificationItem {
  phase: "training" | "quiz";
  index: number;
  imageRef: string;
  codec: string;
  width: number;
  height: number;
}

export interface QualificationDone {
  done: boolean;
  passed: boolean;
}

export interface TrainingFeedback {
  advance: boolean;
  pjndOk: boolean;
  /** null while the threshold is wrong: click grading is withheld. */
  hits: number | null;
  gtRange?: [number, number];
  heatmapUrl?: string;
  clicksLocked?: boolean;
}

export interface QuizOutcome {
  accuracy: number;
  passed: boolean;
}

export interface HitItem {
  imageRef: string;
  codec: string;
  width: number;
  height: number;
  answered: boolean;
}

export interface HitDescriptor {
  hitId: string;
  items: HitItem[];
}

export interface SubmitResult {
  accepted: boolean;
  hitComplete: boolean;
  workerState: string;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

type FetchLike = typeof fetch;

export class StudyApi {
  private token: string | null = null;

  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  get sessionToken(): string | null {
    return this.token;
  }

  async createSession(
    workerId: string,
    ppi: number,
    confirmedDistance: boolean,
  ): Promise<SessionInfo> {
    const body = await this.request("POST", "/v1/session", {
      worker_id: workerId,
      ppi,
      confirmed_distance: confirmedDistance,
    });
    this.token = body.token as string;
    return { token: body.token, workerState: body.worker_state };
  }

  async qualificationNext(): Promise<QualificationItem | QualificationDone> {
    const body = await this.request("GET", "/v1/qualification/next");
    if (body.item === undefined) {
      return { done: Boolean(body.done), passed: Boolean(body.passed) };
    }
    return {
      phase: body.phase,
      index: body.index,
      imageRef: body.item.image_ref,
      codec: body.item.codec,
      width: body.item.width,
      height: body.item.height,
    };
  }

  async qualificationResponse(
    imageRef: string,
    level: number,
    clicks: ReadonlyArray<readonly [number, number]>,
  ): Promise<{ training?: TrainingFeedback; quiz?: QuizOutcome }> {
    const body = await this.request("POST", "/v1/qualification/response", {
      image_ref: imageRef,
      level,
      clicks: clicks.map((c) => [c[0], c[1]]),
    });
    if (body.advance !== undefined) {
      return {
        training: {
          advance: body.advance,
          pjndOk: body.pjnd_ok,
          hits: body.hits,
          gtRange: body.gt_range,
          heatmapUrl: body.heatmap_url,
          clicksLocked: body.clicks_locked,
        },
      };
    }
    if (body.quiz !== undefined) {
      return { quiz: { accuracy: body.quiz.accuracy, passed: body.quiz.passed } };
    }
    return {};
  }

  async hitNext(): Promise<HitDescriptor> {
    const body = await this.request("GET", "/v1/hit/next");
    return {
      hitId: body.hit_id,
      items: body.items.map((it: Record<string, unknown>) => ({
        imageRef: it.image_ref,
        codec: it.codec,
        width: it.width,
        height: it.height,
        answered: it.answered,
      })),
    };
  }

  async submitResponse(
    hitId: string,
    imageRef: string,
    level: number,
    clicks: ReadonlyArray<readonly [number, number]>,
    startedAt: number,
    submittedAt: number,
  ): Promise<SubmitResult> {
    const body = await this.request("POST", `/v1/hit/${hitId}/response`, {
      image_ref: imageRef,
      level,
      clicks: clicks.map((c) => [c[0], c[1]]),
      started_at: startedAt,
      submitted_at: submittedAt,
    });
    return {
      accepted: body.accepted,
      hitComplete: body.hit_complete,
      workerState: body.worker_state,
    };
  }

  frameUrl(imageRef: string, d: number): string {
    return `${this.baseUrl}/v1/frame/${encodeURIComponent(imageRef)}/${d}`;
  }

  heatmapUrl(imageRef: string): string {
    return `${this.baseUrl}/v1/qualification/heatmap/${encodeURIComponent(imageRef)}`;
  }

  private async request(
    method: string,
    path: string,
    payload?: unknown,
    // eslint-disable-next-line @typescript-eslint/no-explicit-any
  ): Promise<any> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) headers["X-Session-Token"] = this.token;
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers,
      body: payload === undefined ? undefined : JSON.stringify(payload),
    });
    let body: unknown = null;
    try {
      body = await response.json();
    } catch {
      // non-JSON error bodies fall through to the status check
    }
    if (!response.ok) {
      const detail =
        body && typeof body === "object" && "detail" in body
          ? String((body as { detail: unknown }).detail)
          : response.statusText;
      throw new ApiError(response.status, detail);
    }
    return body;
  }
}
