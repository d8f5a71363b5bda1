import { describe, expect, it } from 'vitest';

import { DecisionPrompt } from '../src/decisions.js';
import type { PendingDecision } from '../src/state.js';

const gate = (eventSeq: number): PendingDecision => ({
  eventSeq,
  task: 'T1',
  agent: 'Rover1',
  question: 'force?',
  context: '',
});

describe('DecisionPrompt', () => {
  it('sends exactly one decide per request', () => {
    const sent: string[] = [];
    const prompt = new DecisionPrompt((d) => sent.push(d));
    const current = gate(5);
    expect(prompt.submit(current, 'yes')).toBe(true);
    expect(prompt.submit(current, 'yes')).toBe(false); // double click
    expect(prompt.submit(current, 'no')).toBe(false); // change of heart, too late
    expect(sent).toEqual(['yes']);
    expect(prompt.isSubmitted(current)).toBe(true);
  });

  it('treats each queued gate independently', () => {
    const sent: string[] = [];
    const prompt = new DecisionPrompt((d) => sent.push(d));
    expect(prompt.submit(gate(1), 'yes')).toBe(true);
    expect(prompt.submit(gate(2), 'no')).toBe(true);
    expect(sent).toEqual(['yes', 'no']);
  });

  it('ignores submissions with no pending gate', () => {
    const sent: string[] = [];
    const prompt = new DecisionPrompt((d) => sent.push(d));
    expect(prompt.submit(null, 'yes')).toBe(false);
    expect(sent).toEqual([]);
  });
});
