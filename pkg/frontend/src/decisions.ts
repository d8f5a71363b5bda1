/**
 * The yes/no gate modal: one open prompt at a time, exactly one decide
 * command per request no matter how eagerly the buttons are clicked.
 */

import type { PendingDecision } from './state.js';

export type DecideSender = (decision: 'yes' | 'no') => void;

export class DecisionPrompt {
  private submittedFor = new Set<number>();

  constructor(private readonly send: DecideSender) {}

  /**
   * Submit a decision for the prompted gate. Returns true when a decide
   * command went out; repeat clicks before the gate resolves are
   * swallowed client-side.
   */
  submit(current: PendingDecision | null, decision: 'yes' | 'no'): boolean {
    if (!current) return false;
    if (this.submittedFor.has(current.eventSeq)) return false;
    this.submittedFor.add(current.eventSeq);
    this.send(decision);
    return true;
  }

  isSubmitted(current: PendingDecision | null): boolean {
    return current !== null && this.submittedFor.has(current.eventSeq);
  }
}
