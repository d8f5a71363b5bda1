/**
 * Session view state: a pure reducer over the gateway event stream.
 *
 * The store never reorders events (timeline order is gateway seq order)
 * and deduplicates on reconnect replays, so rebuilding from seq 0 always
 * reconstructs an identical view.
 */

import type {
  ChatRecord,
  DecisionRequestPayload,
  GatewayEvent,
  ManualPayload,
} from './protocol.js';

export type LineStyle =
  | 'plain'
  | 'assignment'
  | 'exception'
  | 'status'
  | 'verdict'
  | 'human'
  | 'decision'
  | 'system';

export interface TimelineEntry {
  eventSeq: number;
  logSeq: number | null;
  channelKey: string; // 'group' or the direct-target robot name
  sender: string;
  style: LineStyle;
  text: string;
}

export interface RobotBadge {
  name: string;
  battery: number | null;
  health: string;
  task: string | null;
  position: [number, number] | null;
}

export interface PendingDecision extends DecisionRequestPayload {
  eventSeq: number;
}

const MESSAGE_EVENT_TYPES = new Set([
  'message',
  'assignment',
  'exception',
  'status',
]);

function senderLabel(sender: ChatRecord['sender']): string {
  if (sender.role === 'robot') return sender.name ?? 'robot';
  return sender.role;
}

/** The operator-facing line for one chat record (EOF never shown). */
export function renderChatLine(record: ChatRecord): { style: LineStyle; text: string } {
  const data = record.data ?? {};
  switch (record.kind) {
    case 'task_assignment': {
      const agent = (data['agent'] as string) ?? record.mentions[0] ?? '?';
      const task = (data['task'] as string) ?? '?';
      return { style: 'assignment', text: `- ${agent} has been assigned ${task}` };
    }
    case 'exception':
      return { style: 'exception', text: record.body };
    case 'verification_verdict':
      return { style: 'verdict', text: record.body };
    case 'status_update':
      return { style: 'status', text: record.body };
    case 'human_command':
      return { style: 'human', text: record.body };
    case 'human_decision':
      return { style: 'decision', text: `supervisor: ${record.body}` };
    default:
      return { style: 'plain', text: record.body };
  }
}

export class SessionStore {
  sessionId: string | null = null;
  lastEventSeq = 0;
  phase = 'init';
  stepCount: number | null = null;
  timeline: TimelineEntry[] = [];
  roster = new Map<string, RobotBadge>();
  pendingDecisions: PendingDecision[] = [];
  manuals = new Map<string, ManualPayload>();
  report: Record<string, unknown> | null = null;
  summaryDigest = '';

  /** Apply one event; returns false for duplicates (replay overlap). */
  applyEvent(event: GatewayEvent): boolean {
    if (typeof event.seq !== 'number') return false;
    if (event.seq <= this.lastEventSeq) return false;
    this.lastEventSeq = event.seq;
    if (event.session && !this.sessionId) this.sessionId = event.session;
    const payload = (event.payload ?? {}) as Record<string, unknown>;

    if (MESSAGE_EVENT_TYPES.has(event.type)) {
      const record = payload as unknown as ChatRecord;
      const { style, text } = renderChatLine(record);
      this.timeline.push({
        eventSeq: event.seq,
        logSeq: record.seq ?? null,
        channelKey:
          record.channel?.kind === 'direct'
            ? record.channel.target ?? 'group'
            : 'group',
        sender: senderLabel(record.sender),
        style,
        text,
      });
      this.absorbRecord(record);
      return true;
    }

    switch (event.type) {
      case 'phase_change':
        this.phase = String(payload['to'] ?? this.phase);
        break;
      case 'decision_request':
        this.pendingDecisions.push({
          eventSeq: event.seq,
          task: String(payload['task']),
          agent: String(payload['agent']),
          question: String(payload['question']),
          context: String(payload['context'] ?? ''),
        });
        break;
      case 'summary':
        this.summaryDigest = String(payload['digest'] ?? '');
        break;
      case 'manual': {
        const manual = payload as unknown as ManualPayload;
        this.manuals.set(manual.agent, manual);
        break;
      }
      case 'inspect':
        this.stepCount = Number(payload['step_count'] ?? this.stepCount);
        break;
      case 'report':
        this.report = payload;
        this.phase = payload['success'] ? 'completed' : 'failed';
        break;
      default:
        this.timeline.push({
          eventSeq: event.seq,
          logSeq: null,
          channelKey: 'group',
          sender: 'gateway',
          style: 'system',
          text: `${event.type}: ${JSON.stringify(payload)}`,
        });
    }
    return true;
  }

  private absorbRecord(record: ChatRecord): void {
    const data = record.data ?? {};
    // status reports refresh the roster badges
    if (record.kind === 'status_update' && data['status'] === 'status_report') {
      const name = String(data['agent']);
      const position = data['position'] as [number, number] | undefined;
      this.roster.set(name, {
        name,
        battery: Number(data['battery_pct'] ?? NaN),
        health: String(data['health'] ?? 'ok'),
        task: (data['task'] as string | null) ?? null,
        position: position ?? null,
      });
    }
    if (record.kind === 'exception' && data['agent']) {
      const name = String(data['agent']);
      const badge = this.roster.get(name) ?? {
        name,
        battery: null,
        health: 'ok',
        task: null,
        position: null,
      };
      badge.health = String(data['kind'] ?? 'fault');
      this.roster.set(name, badge);
    }
    // a human decision resolves the oldest pending gate
    if (record.kind === 'human_decision') {
      this.pendingDecisions.shift();
    }
  }

  /** The currently prompted gate (prompts are sequential in seq order). */
  currentDecision(): PendingDecision | null {
    return this.pendingDecisions[0] ?? null;
  }

  thread(channelKey: string): TimelineEntry[] {
    return this.timeline.filter((entry) => entry.channelKey === channelKey);
  }

  /** Stable fingerprint of the rendered timeline (reconnect parity). */
  timelineFingerprint(): string {
    return this.timeline
      .map((e) => `${e.eventSeq}|${e.channelKey}|${e.sender}|${e.style}|${e.text}`)
      .join('\n');
  }
}
