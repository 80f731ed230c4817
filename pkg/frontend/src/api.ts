/**
 * Typed client for the rxcritic HTTP API.
 *
 * The UI never computes criticisms locally: every verdict it shows comes out
 * of a /check response, and the raw response text is kept alongside the
 * parsed document so a rendered verdict stays byte-traceable to the wire.
 */

export type CriticismType =
  | 'contraindicated'
  | 'already_failed'
  | 'not_first_line'
  | 'not_recommended';

export interface CriticismDoc {
  ctype: CriticismType;
  target: string;
  explanation: string;
  proposals: string[];
  strength: string | null;
  excerpt: string | null;
}

export interface VerdictDoc {
  status: 'silent' | 'criticized';
  criticisms: CriticismDoc[];
  secondary: CriticismDoc[];
  missing_data: string[];
  fingerprint: string;
}

export interface FormHint {
  criterion: string;
  kind: 'flag' | 'enum' | 'number';
  options: string[];
  unit: string;
}

export interface CheckResponse {
  verdict_id: string;
  fingerprint: string;
  verdict: VerdictDoc;
  form_hints: FormHint[];
}

export interface GuidelineInfo {
  name: string;
  strategy: string;
  counts: {
    criteria: number;
    treatments: number;
    recommendations: number;
    rules: number;
  };
  fingerprint: string;
}

export interface PatientRecordDoc {
  patient_id: string;
  facts: Record<string, boolean | number | string>;
  history?: Array<{ target: string; outcome: string; start_date?: string | null }>;
}

export interface PrescriptionDoc {
  items: Array<{ treatment?: string; code?: string }>;
}

export interface CheckRequest {
  guideline: string;
  record: PatientRecordDoc;
  prescription: PrescriptionDoc;
  fingerprint?: string;
}

export interface FeedbackAnswers {
  verdict_id: string;
  expected_alert: boolean;
  justified: boolean;
  explanations_appropriate: boolean | null;
  comment: string;
}

export interface MetricsDoc {
  matrix: { tp: number; fp: number; tn: number; fn: number };
  total: number;
  sensitivity: { value: number; half_width: number } | null;
  specificity: { value: number; half_width: number } | null;
  appropriateness: number | null;
}

export class ApiError extends Error {
  constructor(public readonly status: number, detail: string) {
    super(detail);
    this.name = 'ApiError';
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class RxCriticClient {
  private readonly fetchFn: FetchLike;

  constructor(private readonly baseUrl: string, fetchFn?: FetchLike) {
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  private async request(path: string, init?: RequestInit): Promise<{ raw: string; body: any }> {
    const response = await this.fetchFn(this.baseUrl + path, init);
    const raw = await response.text();
    if (!response.ok) {
      let detail = raw;
      try {
        detail = JSON.parse(raw).detail ?? raw;
      } catch {
        // keep the raw body
      }
      throw new ApiError(response.status, String(detail));
    }
    return { raw, body: JSON.parse(raw) };
  }

  async listGuidelines(): Promise<GuidelineInfo[]> {
    return (await this.request('/guidelines')).body as GuidelineInfo[];
  }

  /** POST /check; returns the parsed response plus its raw wire text. */
  async check(
    request: CheckRequest,
    signal?: AbortSignal,
  ): Promise<{ response: CheckResponse; raw: string }> {
    const { raw, body } = await this.request('/check', {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(request),
      signal,
    });
    return { response: body as CheckResponse, raw };
  }

  async submitFeedback(answers: FeedbackAnswers): Promise<{ feedback_id: string }> {
    const { body } = await this.request('/feedback', {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(answers),
    });
    return body as { feedback_id: string };
  }

  async metrics(): Promise<MetricsDoc> {
    return (await this.request('/metrics')).body as MetricsDoc;
  }
}
