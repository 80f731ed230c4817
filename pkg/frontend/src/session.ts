/**
 * Consultation session state: the working patient record, the prescription
 * draft, and the last verdict.
 *
 * The moment the record or the draft changes, the displayed verdict is
 * marked stale (same tick, before any network round-trip).  Only one /check
 * runs at a time; a newer submission aborts the one in flight.  Feedback is
 * collected about the most recent alert, whose verdict id stays bound even
 * after a corrective silent re-check.
 */

import {
  CheckResponse,
  FeedbackAnswers,
  GuidelineInfo,
  MetricsDoc,
  PatientRecordDoc,
  RxCriticClient,
} from './api.js';

export interface AlertUnderReview {
  verdictId: string;
  response: CheckResponse;
  raw: string;
}

export type SessionListener = () => void;

export class ConsultationSession {
  guideline: GuidelineInfo | null = null;
  record: PatientRecordDoc = { patient_id: '', facts: {} };
  prescriptionItems: string[] = [];

  lastCheck: CheckResponse | null = null;
  lastCheckRaw: string | null = null;
  verdictStale = false;
  checkError: string | null = null;
  checking = false;

  alertUnderReview: AlertUnderReview | null = null;
  feedbackSubmitted = false;
  metrics: MetricsDoc | null = null;

  satisfactionResponses: Array<Record<string, string>> = [];

  private inflight: AbortController | null = null;
  private listeners: SessionListener[] = [];

  constructor(private readonly client: RxCriticClient) {}

  subscribe(listener: SessionListener): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  private markVerdictStale(): void {
    if (this.lastCheck !== null) this.verdictStale = true;
  }

  selectGuideline(info: GuidelineInfo): void {
    this.guideline = info;
    this.lastCheck = null;
    this.lastCheckRaw = null;
    this.verdictStale = false;
    this.alertUnderReview = null;
    this.feedbackSubmitted = false;
    this.notify();
  }

  loadRecord(record: PatientRecordDoc): void {
    this.record = record;
    this.markVerdictStale();
    this.notify();
  }

  /** Merge inclusion-form answers into the working record. */
  applyFormAnswers(answers: Record<string, boolean | number | string>): void {
    this.record = {
      ...this.record,
      facts: { ...this.record.facts, ...answers },
    };
    this.markVerdictStale();
    this.notify();
  }

  setPrescription(treatments: string[]): void {
    this.prescriptionItems = [...treatments];
    this.markVerdictStale();
    this.notify();
  }

  /** One-click substitution: swap the criticized drug for a proposal. */
  substituteProposal(target: string, proposal: string): void {
    this.prescriptionItems = this.prescriptionItems.map((item) =>
      item === target ? proposal : item,
    );
    this.markVerdictStale();
    this.notify();
  }

  async check(): Promise<void> {
    if (this.guideline === null) {
      this.checkError = 'select a guideline first';
      this.notify();
      return;
    }
    this.inflight?.abort();
    const controller = new AbortController();
    this.inflight = controller;
    this.checking = true;
    this.checkError = null;
    this.notify();
    try {
      const { response, raw } = await this.client.check(
        {
          guideline: this.guideline.name,
          record: this.record,
          prescription: { items: this.prescriptionItems.map((treatment) => ({ treatment })) },
          fingerprint: this.guideline.fingerprint,
        },
        controller.signal,
      );
      if (this.inflight !== controller) return; // a newer check superseded this one
      this.lastCheck = response;
      this.lastCheckRaw = raw;
      this.verdictStale = false;
      if (response.verdict.status === 'criticized') {
        this.alertUnderReview = { verdictId: response.verdict_id, response, raw };
        this.feedbackSubmitted = false;
      }
    } catch (error: any) {
      if (error?.name === 'AbortError') return;
      if (this.inflight === controller) {
        this.checkError = error?.message ?? String(error);
      }
    } finally {
      if (this.inflight === controller) {
        this.inflight = null;
        this.checking = false;
      }
      this.notify();
    }
  }

  /** The verdict feedback refers to: the alert under review, else the last check. */
  feedbackVerdictId(): string | null {
    return this.alertUnderReview?.verdictId ?? this.lastCheck?.verdict_id ?? null;
  }

  feedbackAlertRaised(): boolean {
    if (this.alertUnderReview !== null) return true;
    return this.lastCheck?.verdict.status === 'criticized';
  }

  async submitFeedback(
    answers: Omit<FeedbackAnswers, 'verdict_id'>,
  ): Promise<void> {
    const verdictId = this.feedbackVerdictId();
    if (verdictId === null) throw new Error('no verdict to give feedback on');
    await this.client.submitFeedback({ ...answers, verdict_id: verdictId });
    this.feedbackSubmitted = true;
    await this.refreshMetrics();
  }

  async refreshMetrics(): Promise<void> {
    this.metrics = await this.client.metrics();
    this.notify();
  }

  addSatisfactionResponse(response: Record<string, string>): void {
    this.satisfactionResponses.push(response);
    this.notify();
  }

  /** Percentages per question over the session's satisfaction responses. */
  satisfactionRows(questions: string[], scale: string[]): Map<string, number[]> {
    const rows = new Map<string, number[]>();
    const n = this.satisfactionResponses.length;
    for (const question of questions) {
      const counts = scale.map(
        (point) =>
          this.satisfactionResponses.filter((r) => r[question] === point).length,
      );
      rows.set(
        question,
        counts.map((c) => (n === 0 ? 0 : Math.floor((100 * c) / n + 0.5))),
      );
    }
    return rows;
  }
}
