/**
 * Consultation screen rendering.
 *
 * Layout: guideline picker, working record, persistent "data needed" strip,
 * inclusion form (skippable, never blocking), prescription entry, the alert
 * panel with one-click proposal substitution, the four-question feedback
 * form with a live metrics panel, and the satisfaction questionnaire.
 *
 * Rendering is a full redraw on every session change; in-progress input is
 * kept in drafts so a redraw never loses what the physician typed.
 */

import { CriticismDoc, FormHint, GuidelineInfo, RxCriticClient } from './api.js';
import { ConsultationSession } from './session.js';

export const SATISFACTION_SCALE = [
  'strong_agree',
  'weak_agree',
  'weak_disagree',
  'strong_disagree',
];

export const SATISFACTION_QUESTIONS: Array<{ key: string; text: string }> = [
  { key: 'wants_automatic_criticisms', text: 'I would welcome automatic criticism of my prescriptions.' },
  { key: 'easy_to_use', text: 'The critiquing tool is easy to use.' },
  { key: 'response_time_ok', text: 'The tool responds quickly enough for consultations.' },
  { key: 'well_integrated', text: 'The tool sits well inside the prescribing screen.' },
  { key: 'fits_daily_practice', text: 'The tool could fit into my daily practice.' },
  { key: 'low_consultation_interference', text: 'Using the tool interferes little with my patient consultations.' },
  { key: 'extend_to_more_guidelines', text: 'Extending the tool to more guidelines would be valuable.' },
];

const BADGE_LABELS: Record<string, string> = {
  contraindicated: 'Contraindicated',
  already_failed: 'Already tried without success',
  not_first_line: 'Not a first-line option yet',
  not_recommended: 'Not recommended in this context',
};

interface FeedbackDraft {
  expected: boolean | null;
  justified: boolean | null;
  appropriate: boolean | null;
  comment: string;
}

export class ConsultApp {
  guidelines: GuidelineInfo[] = [];
  recordText = '';
  rxText = '';
  formDraft: Record<string, string> = {};
  formCollapsed = false;
  formError: string | null = null;
  feedbackDraft: FeedbackDraft = { expected: null, justified: null, appropriate: null, comment: '' };
  satisfactionDraft: Record<string, string> = {};

  constructor(
    private readonly root: HTMLElement,
    readonly client: RxCriticClient,
    readonly session: ConsultationSession,
  ) {
    session.subscribe(() => this.render());
  }

  async boot(): Promise<void> {
    this.guidelines = await this.client.listGuidelines();
    await this.session.refreshMetrics();
    this.render();
  }

  // -- actions --------------------------------------------------------------

  loadRecordFromText(): void {
    try {
      const doc = JSON.parse(this.recordText);
      this.session.loadRecord(doc);
    } catch (error: any) {
      this.formError = `record is not valid JSON: ${error?.message ?? error}`;
      this.render();
    }
  }

  applyForm(hints: FormHint[]): void {
    const answers: Record<string, boolean | number | string> = {};
    for (const hint of hints) {
      const raw = this.formDraft[hint.criterion];
      if (raw === undefined || raw === '') continue; // unanswered stays missing
      if (hint.kind === 'flag') {
        answers[hint.criterion] = raw === 'true';
      } else if (hint.kind === 'enum') {
        answers[hint.criterion] = raw;
      } else {
        const value = Number(raw);
        if (!Number.isFinite(value)) {
          this.formError = `${hint.criterion}: enter a number (${hint.unit})`;
          this.render();
          return;
        }
        if (value < 0) {
          this.formError = `${hint.criterion}: a ${hint.unit} value cannot be negative`;
          this.render();
          return;
        }
        answers[hint.criterion] = value;
      }
    }
    this.formError = null;
    this.session.applyFormAnswers(answers);
    void this.session.check();
  }

  checkPrescription(): void {
    const items = this.rxText
      .split(',')
      .map((part) => part.trim())
      .filter((part) => part.length > 0);
    this.session.setPrescription(items);
    void this.session.check();
  }

  substitute(target: string, proposal: string): void {
    this.session.substituteProposal(target, proposal);
    this.rxText = this.session.prescriptionItems.join(', ');
    void this.session.check();
  }

  feedbackComplete(): boolean {
    if (this.feedbackDraft.expected === null || this.feedbackDraft.justified === null) {
      return false;
    }
    if (this.session.feedbackAlertRaised() && this.feedbackDraft.appropriate === null) {
      return false;
    }
    return true;
  }

  async submitFeedback(): Promise<void> {
    if (!this.feedbackComplete()) return;
    await this.session.submitFeedback({
      expected_alert: this.feedbackDraft.expected as boolean,
      justified: this.feedbackDraft.justified as boolean,
      explanations_appropriate: this.session.feedbackAlertRaised()
        ? this.feedbackDraft.appropriate
        : null,
      comment: this.feedbackDraft.comment,
    });
    this.feedbackDraft = { expected: null, justified: null, appropriate: null, comment: '' };
    this.render();
  }

  submitSatisfaction(): void {
    if (Object.keys(this.satisfactionDraft).length < SATISFACTION_QUESTIONS.length) return;
    this.session.addSatisfactionResponse({ ...this.satisfactionDraft });
    this.satisfactionDraft = {};
    this.render();
  }

  // -- rendering ------------------------------------------------------------

  render(): void {
    this.root.innerHTML = '';
    this.root.appendChild(this.renderGuidelinePicker());
    this.root.appendChild(this.renderRecordLoader());
    this.root.appendChild(this.renderDataNeeded());
    this.root.appendChild(this.renderInclusionForm());
    this.root.appendChild(this.renderPrescriptionEntry());
    this.root.appendChild(this.renderVerdictPanel());
    this.root.appendChild(this.renderFeedbackPanel());
    this.root.appendChild(this.renderMetricsPanel());
    this.root.appendChild(this.renderSatisfactionPanel());
  }

  private section(title: string, testId: string): HTMLElement {
    const box = document.createElement('section');
    box.dataset.testid = testId;
    const heading = document.createElement('h2');
    heading.textContent = title;
    box.appendChild(heading);
    return box;
  }

  private renderGuidelinePicker(): HTMLElement {
    const box = this.section('Guideline', 'guideline-picker');
    const select = document.createElement('select');
    select.dataset.testid = 'guideline-select';
    const placeholder = document.createElement('option');
    placeholder.value = '';
    placeholder.textContent = 'select a guideline';
    select.appendChild(placeholder);
    for (const info of this.guidelines) {
      const option = document.createElement('option');
      option.value = info.name;
      option.textContent =
        `${info.name} (${info.counts.criteria} criteria, ${info.counts.rules} rules)`;
      select.appendChild(option);
    }
    select.value = this.session.guideline?.name ?? '';
    select.addEventListener('change', () => {
      const chosen = this.guidelines.find((g) => g.name === select.value);
      if (chosen) this.session.selectGuideline(chosen);
    });
    box.appendChild(select);
    if (this.session.guideline) {
      const tag = document.createElement('span');
      tag.dataset.testid = 'guideline-fingerprint';
      tag.className = 'fingerprint';
      tag.textContent = this.session.guideline.fingerprint.slice(0, 12);
      box.appendChild(tag);
    }
    return box;
  }

  private renderRecordLoader(): HTMLElement {
    const box = this.section('Patient record (from the EPR)', 'record-loader');
    const area = document.createElement('textarea');
    area.dataset.testid = 'record-json';
    area.rows = 6;
    area.value = this.recordText;
    area.addEventListener('input', () => {
      this.recordText = area.value;
    });
    const load = document.createElement('button');
    load.dataset.testid = 'record-load';
    load.textContent = 'Load record';
    load.addEventListener('click', () => this.loadRecordFromText());
    box.appendChild(area);
    box.appendChild(load);
    const summary = document.createElement('p');
    summary.dataset.testid = 'record-summary';
    const count = Object.keys(this.session.record.facts).length;
    summary.textContent = this.session.record.patient_id
      ? `${this.session.record.patient_id}: ${count} coded fact(s)`
      : 'no record loaded';
    box.appendChild(summary);
    return box;
  }

  private renderDataNeeded(): HTMLElement {
    const strip = document.createElement('div');
    strip.dataset.testid = 'data-needed';
    strip.className = 'data-needed';
    const missing = this.session.lastCheck?.verdict.missing_data ?? [];
    if (missing.length === 0) {
      strip.classList.add('empty');
      strip.textContent = '';
      return strip;
    }
    strip.textContent = `Data needed to decide: ${missing.join(', ')}`;
    return strip;
  }

  private renderInclusionForm(): HTMLElement {
    const box = this.section('Inclusion form', 'form-panel');
    const hints = this.session.lastCheck?.form_hints ?? [];
    if (hints.length === 0) {
      const done = document.createElement('p');
      done.dataset.testid = 'form-complete';
      done.textContent = this.session.lastCheck
        ? 'All form data captured.'
        : 'Run a check to see which form data the guideline needs.';
      box.appendChild(done);
      return box;
    }
    const skip = document.createElement('button');
    skip.dataset.testid = 'form-skip';
    skip.textContent = this.formCollapsed ? 'Show form' : 'Fill in later';
    skip.addEventListener('click', () => {
      this.formCollapsed = !this.formCollapsed;
      this.render();
    });
    box.appendChild(skip);
    if (this.formCollapsed) return box;

    for (const hint of hints) {
      const row = document.createElement('label');
      row.className = 'form-row';
      row.textContent = hint.criterion + (hint.unit ? ` (${hint.unit})` : '');
      let input: HTMLElement;
      if (hint.kind === 'flag') {
        const select = document.createElement('select');
        for (const value of ['', 'false', 'true']) {
          const option = document.createElement('option');
          option.value = value;
          option.textContent = value === '' ? '—' : value === 'true' ? 'yes' : 'no';
          select.appendChild(option);
        }
        select.value = this.formDraft[hint.criterion] ?? '';
        select.addEventListener('change', () => {
          this.formDraft[hint.criterion] = select.value;
        });
        input = select;
      } else if (hint.kind === 'enum') {
        const select = document.createElement('select');
        const blank = document.createElement('option');
        blank.value = '';
        blank.textContent = '—';
        select.appendChild(blank);
        for (const value of hint.options) {
          const option = document.createElement('option');
          option.value = value;
          option.textContent = value;
          select.appendChild(option);
        }
        select.value = this.formDraft[hint.criterion] ?? '';
        select.addEventListener('change', () => {
          this.formDraft[hint.criterion] = select.value;
        });
        input = select;
      } else {
        const field = document.createElement('input');
        field.type = 'number';
        field.value = this.formDraft[hint.criterion] ?? '';
        field.addEventListener('input', () => {
          this.formDraft[hint.criterion] = field.value;
        });
        input = field;
      }
      input.dataset.testid = `form-field-${hint.criterion}`;
      row.appendChild(input);
      box.appendChild(row);
    }
    if (this.formError) {
      const error = document.createElement('p');
      error.dataset.testid = 'form-error';
      error.className = 'error';
      error.textContent = this.formError;
      box.appendChild(error);
    }
    const apply = document.createElement('button');
    apply.dataset.testid = 'form-apply';
    apply.textContent = 'Save answers and re-check';
    apply.addEventListener('click', () => this.applyForm(hints));
    box.appendChild(apply);
    return box;
  }

  private renderPrescriptionEntry(): HTMLElement {
    const box = this.section('Prescription', 'rx-panel');
    const input = document.createElement('input');
    input.dataset.testid = 'rx-input';
    input.placeholder = 'treatment ids, comma-separated';
    input.value = this.rxText;
    input.addEventListener('input', () => {
      this.rxText = input.value;
    });
    const button = document.createElement('button');
    button.dataset.testid = 'rx-check';
    button.textContent = this.session.checking ? 'Checking…' : 'Check prescription';
    button.addEventListener('click', () => this.checkPrescription());
    box.appendChild(input);
    box.appendChild(button);
    return box;
  }

  private renderCriticism(criticism: CriticismDoc): HTMLElement {
    const card = document.createElement('article');
    card.className = `criticism ${criticism.ctype}`;
    card.dataset.testid = `criticism-${criticism.target}`;
    const badge = document.createElement('span');
    badge.className = 'badge';
    badge.dataset.testid = 'criticism-badge';
    badge.textContent = BADGE_LABELS[criticism.ctype] ?? criticism.ctype;
    card.appendChild(badge);
    const target = document.createElement('strong');
    target.textContent = ` ${criticism.target}`;
    card.appendChild(target);
    const explanation = document.createElement('p');
    explanation.dataset.testid = 'criticism-explanation';
    explanation.textContent = criticism.explanation;
    card.appendChild(explanation);
    if (criticism.excerpt) {
      const excerpt = document.createElement('blockquote');
      excerpt.dataset.testid = 'criticism-excerpt';
      excerpt.textContent = criticism.excerpt;
      card.appendChild(excerpt);
    }
    if (criticism.strength) {
      const strength = document.createElement('span');
      strength.dataset.testid = 'criticism-strength';
      strength.className = 'strength';
      strength.textContent = `recommendation grade ${criticism.strength}`;
      card.appendChild(strength);
    }
    if (criticism.proposals.length > 0) {
      const list = document.createElement('div');
      list.className = 'proposals';
      const label = document.createElement('span');
      label.textContent = 'Guideline proposes: ';
      list.appendChild(label);
      for (const proposal of criticism.proposals) {
        const swap = document.createElement('button');
        swap.dataset.testid = `proposal-${proposal}`;
        swap.textContent = `switch to ${proposal}`;
        swap.addEventListener('click', () => this.substitute(criticism.target, proposal));
        list.appendChild(swap);
      }
      card.appendChild(list);
    }
    return card;
  }

  private renderVerdictPanel(): HTMLElement {
    const box = this.section('Verdict', 'alert-panel');
    if (this.session.checkError) {
      const error = document.createElement('p');
      error.dataset.testid = 'check-error';
      error.className = 'error';
      error.textContent = `check failed: ${this.session.checkError}`;
      const retry = document.createElement('button');
      retry.dataset.testid = 'check-retry';
      retry.textContent = 'Retry';
      retry.addEventListener('click', () => void this.session.check());
      box.appendChild(error);
      box.appendChild(retry);
      return box;
    }
    const verdict = this.session.lastCheck?.verdict;
    if (!verdict) {
      const idle = document.createElement('p');
      idle.textContent = 'No check yet.';
      box.appendChild(idle);
      return box;
    }
    if (this.session.verdictStale) {
      const stale = document.createElement('span');
      stale.dataset.testid = 'stale-badge';
      stale.className = 'stale';
      stale.textContent = 'outdated — record or prescription changed since this verdict';
      box.appendChild(stale);
    }
    if (verdict.status === 'silent') {
      const strip = document.createElement('p');
      strip.dataset.testid = 'status-strip';
      strip.className = 'silent';
      strip.textContent = 'No objection from the guideline.';
      box.appendChild(strip);
      return box;
    }
    for (const criticism of verdict.criticisms) {
      box.appendChild(this.renderCriticism(criticism));
    }
    for (const criticism of verdict.secondary) {
      const minor = this.renderCriticism(criticism);
      minor.classList.add('secondary');
      box.appendChild(minor);
    }
    return box;
  }

  private radioPair(
    name: string,
    testId: string,
    value: boolean | null,
    onChange: (v: boolean) => void,
  ): HTMLElement {
    const wrap = document.createElement('span');
    for (const option of [true, false]) {
      const label = document.createElement('label');
      const radio = document.createElement('input');
      radio.type = 'radio';
      radio.name = name;
      radio.dataset.testid = `${testId}-${option ? 'yes' : 'no'}`;
      radio.checked = value === option;
      radio.addEventListener('change', () => onChange(option));
      label.appendChild(radio);
      label.appendChild(document.createTextNode(option ? 'yes' : 'no'));
      wrap.appendChild(label);
    }
    return wrap;
  }

  private renderFeedbackPanel(): HTMLElement {
    const box = this.section('Feedback on this check', 'feedback-panel');
    if (this.session.feedbackVerdictId() === null) {
      const idle = document.createElement('p');
      idle.textContent = 'Feedback opens after the first check.';
      box.appendChild(idle);
      return box;
    }
    const raised = this.session.feedbackAlertRaised();

    const rows: Array<[string, HTMLElement]> = [];
    rows.push([
      'Did you expect an alert?',
      this.radioPair('fb-expected', 'fb-expected', this.feedbackDraft.expected, (v) => {
        this.feedbackDraft.expected = v;
        this.render();
      }),
    ]);
    const raisedValue = document.createElement('span');
    raisedValue.dataset.testid = 'fb-raised';
    raisedValue.textContent = raised ? 'yes (recorded by the system)' : 'no (recorded by the system)';
    rows.push(['Was an alert raised?', raisedValue]);
    rows.push([
      raised ? 'Was the alert justified?' : 'Was the silence justified?',
      this.radioPair('fb-justified', 'fb-justified', this.feedbackDraft.justified, (v) => {
        this.feedbackDraft.justified = v;
        this.render();
      }),
    ]);
    if (raised) {
      rows.push([
        'Were the explanations and proposals appropriate?',
        this.radioPair('fb-appropriate', 'fb-appropriate', this.feedbackDraft.appropriate, (v) => {
          this.feedbackDraft.appropriate = v;
          this.render();
        }),
      ]);
    }
    for (const [label, control] of rows) {
      const row = document.createElement('div');
      row.className = 'form-row';
      const text = document.createElement('span');
      text.textContent = label;
      row.appendChild(text);
      row.appendChild(control);
      box.appendChild(row);
    }
    const comment = document.createElement('textarea');
    comment.dataset.testid = 'fb-comment';
    comment.placeholder = 'additional comments (optional)';
    comment.value = this.feedbackDraft.comment;
    comment.addEventListener('input', () => {
      this.feedbackDraft.comment = comment.value;
    });
    box.appendChild(comment);
    const submit = document.createElement('button');
    submit.dataset.testid = 'fb-submit';
    submit.textContent = 'Submit feedback';
    submit.disabled = !this.feedbackComplete();
    submit.addEventListener('click', () => void this.submitFeedback());
    box.appendChild(submit);
    if (this.session.feedbackSubmitted) {
      const done = document.createElement('p');
      done.dataset.testid = 'fb-done';
      done.textContent = 'Feedback recorded.';
      box.appendChild(done);
    }
    return box;
  }

  private renderMetricsPanel(): HTMLElement {
    const box = this.section('Evaluation so far', 'metrics-panel');
    const metrics = this.session.metrics;
    if (!metrics) {
      box.appendChild(document.createTextNode('no feedback yet'));
      return box;
    }
    const matrix = document.createElement('p');
    matrix.dataset.testid = 'metrics-matrix';
    matrix.textContent =
      `tp=${metrics.matrix.tp} fp=${metrics.matrix.fp} ` +
      `tn=${metrics.matrix.tn} fn=${metrics.matrix.fn}`;
    box.appendChild(matrix);
    const detail = document.createElement('p');
    detail.dataset.testid = 'metrics-detail';
    const fmt = (m: { value: number; half_width: number } | null) =>
      m ? `${(100 * m.value).toFixed(0)}±${(100 * m.half_width).toFixed(1)}%` : 'n/a';
    detail.textContent =
      `sensitivity ${fmt(metrics.sensitivity)}, specificity ${fmt(metrics.specificity)}, ` +
      `appropriate ${metrics.appropriateness === null ? 'n/a' : (100 * metrics.appropriateness).toFixed(0) + '%'}`;
    box.appendChild(detail);
    return box;
  }

  private renderSatisfactionPanel(): HTMLElement {
    const box = this.section('Satisfaction questionnaire', 'satisfaction-panel');
    for (const question of SATISFACTION_QUESTIONS) {
      const row = document.createElement('div');
      row.className = 'form-row';
      const text = document.createElement('span');
      text.textContent = question.text;
      row.appendChild(text);
      for (const point of SATISFACTION_SCALE) {
        const label = document.createElement('label');
        const radio = document.createElement('input');
        radio.type = 'radio';
        radio.name = `sat-${question.key}`;
        radio.dataset.testid = `sat-${question.key}-${point}`;
        radio.checked = this.satisfactionDraft[question.key] === point;
        radio.addEventListener('change', () => {
          this.satisfactionDraft[question.key] = point;
        });
        label.appendChild(radio);
        label.appendChild(document.createTextNode(point.replace('_', ' ')));
        row.appendChild(label);
      }
      box.appendChild(row);
    }
    const submit = document.createElement('button');
    submit.dataset.testid = 'sat-submit';
    submit.textContent = 'Submit questionnaire';
    submit.addEventListener('click', () => this.submitSatisfaction());
    box.appendChild(submit);

    if (this.session.satisfactionResponses.length > 0) {
      const rows = this.session.satisfactionRows(
        SATISFACTION_QUESTIONS.map((q) => q.key),
        SATISFACTION_SCALE,
      );
      const table = document.createElement('div');
      table.dataset.testid = 'sat-results';
      for (const [key, percentages] of rows) {
        const row = document.createElement('p');
        row.dataset.testid = `sat-row-${key}`;
        row.textContent = `${key}: ${percentages.join(' / ')}`;
        table.appendChild(row);
      }
      box.appendChild(table);
    }
    return box;
  }
}

export async function initConsultApp(
  root: HTMLElement,
  baseUrl: string,
): Promise<ConsultApp> {
  const client = new RxCriticClient(baseUrl);
  const session = new ConsultationSession(client);
  const app = new ConsultApp(root, client, session);
  await app.boot();
  return app;
}
