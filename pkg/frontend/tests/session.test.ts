/** Session invariants with a scripted backend: staleness, request
 * cancellation, and feedback binding to the alert under review. */

import { describe, expect, it } from 'vitest';

import { CheckResponse, RxCriticClient } from '../src/api.js';
import { ConsultationSession } from '../src/session.js';

function checkBody(status: 'silent' | 'criticized', verdictId: string): CheckResponse {
  return {
    verdict_id: verdictId,
    fingerprint: 'f'.repeat(64),
    verdict: {
      status,
      criticisms:
        status === 'criticized'
          ? [{
              ctype: 'not_recommended',
              target: 'tx_x',
              explanation: 'why',
              proposals: ['tx_y'],
              strength: null,
              excerpt: null,
            }]
          : [],
      secondary: [],
      missing_data: [],
      fingerprint: 'f'.repeat(64),
    },
    form_hints: [],
  };
}

interface Scripted {
  client: RxCriticClient;
  calls: Array<{ path: string; signal?: AbortSignal }>;
  resolveNext: (body: unknown) => void;
}

function scriptedClient(queue: Array<'hang' | unknown>): Scripted {
  const calls: Scripted['calls'] = [];
  let release: ((body: unknown) => void) | null = null;
  const fetchFn = (input: string, init?: RequestInit): Promise<Response> => {
    calls.push({ path: input, signal: init?.signal ?? undefined });
    const step = queue.shift();
    const respond = (body: unknown) =>
      new Response(JSON.stringify(body), { status: 200 });
    if (step === 'hang') {
      return new Promise((resolve, reject) => {
        release = (body) => resolve(respond(body));
        init?.signal?.addEventListener('abort', () =>
          reject(Object.assign(new Error('aborted'), { name: 'AbortError' })),
        );
      });
    }
    return Promise.resolve(respond(step));
  };
  const client = new RxCriticClient('http://test', fetchFn);
  return { client, calls, resolveNext: (body) => release?.(body) };
}

const GUIDELINE = {
  name: 'kb',
  strategy: 'star',
  counts: { criteria: 1, treatments: 2, recommendations: 1, rules: 3 },
  fingerprint: 'f'.repeat(64),
};

describe('ConsultationSession', () => {
  it('marks the displayed verdict stale the moment inputs change', async () => {
    const { client } = scriptedClient([checkBody('silent', 'v1')]);
    const session = new ConsultationSession(client);
    session.selectGuideline(GUIDELINE);
    session.setPrescription(['tx_x']);
    await session.check();
    expect(session.verdictStale).toBe(false);

    session.applyFormAnswers({ smoker: true });
    expect(session.verdictStale).toBe(true); // synchronously, same tick
  });

  it('aborts the in-flight check when a newer one is submitted', async () => {
    const scripted = scriptedClient(['hang', checkBody('silent', 'v2')]);
    const session = new ConsultationSession(scripted.client);
    session.selectGuideline(GUIDELINE);
    session.setPrescription(['tx_x']);

    const first = session.check();
    const second = session.check();
    await Promise.all([first, second]);

    expect(scripted.calls).toHaveLength(2);
    expect(scripted.calls[0].signal?.aborted).toBe(true);
    expect(session.lastCheck?.verdict_id).toBe('v2');
    expect(session.checkError).toBeNull();
  });

  it('keeps feedback bound to the alert after a corrective silent re-check', async () => {
    const { client } = scriptedClient([
      checkBody('criticized', 'alert-1'),
      checkBody('silent', 'silent-2'),
    ]);
    const session = new ConsultationSession(client);
    session.selectGuideline(GUIDELINE);
    session.setPrescription(['tx_x']);
    await session.check();
    expect(session.alertUnderReview?.verdictId).toBe('alert-1');

    session.substituteProposal('tx_x', 'tx_y');
    expect(session.prescriptionItems).toEqual(['tx_y']);
    await session.check();
    expect(session.lastCheck?.verdict.status).toBe('silent');

    expect(session.feedbackVerdictId()).toBe('alert-1');
    expect(session.feedbackAlertRaised()).toBe(true);
  });

  it('keeps the raw wire text of the displayed verdict', async () => {
    const body = checkBody('criticized', 'alert-9');
    const { client } = scriptedClient([body]);
    const session = new ConsultationSession(client);
    session.selectGuideline(GUIDELINE);
    session.setPrescription(['tx_x']);
    await session.check();
    expect(session.lastCheckRaw).toBe(JSON.stringify(body));
    expect(JSON.parse(session.lastCheckRaw!).verdict.criticisms[0].explanation).toBe('why');
  });
});
