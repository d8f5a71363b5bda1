/**
 * Gateway wire protocol: JSON command/event payloads shared by the
 * WebSocket (browser) and length-prefixed TCP (tooling) transports.
 */

export const PROTOCOL_VERSION = 1;

export interface Sender {
  role: 'human' | 'assistant' | 'robot';
  name: string | null;
}

export interface ChannelRef {
  kind: 'group' | 'direct';
  target: string | null;
}

export interface ChatRecord {
  seq: number;
  tick: number;
  sender: Sender;
  channel: ChannelRef;
  mentions: string[];
  kind: string;
  body: string;
  attachment: string | null;
  data: Record<string, unknown> | null;
}

export interface GatewayEvent {
  type: string;
  session?: string;
  seq?: number;
  payload?: Record<string, unknown>;
  /** ack / error frames */
  id?: string | null;
  error?: string;
  proto?: number;
  [extra: string]: unknown;
}

export interface DecisionRequestPayload {
  task: string;
  agent: string;
  question: string;
  context: string;
}

export interface SpecQuantity {
  value: number;
  unit: string;
}

export interface SpecSheet {
  height_m: SpecQuantity | null;
  width_m: SpecQuantity | null;
  max_speed: SpecQuantity | null;
  torque: SpecQuantity | null;
  battery_capacity: SpecQuantity | null;
  source_doc: string;
}

export interface ManualPayload {
  agent: string;
  doc_id: string;
  chunks: number;
  version: number;
  spec: SpecSheet;
}

export type WireCommand =
  | { type: 'start_session'; id: string; payload: Record<string, unknown> }
  | { type: 'subscribe'; id: string; session: string; payload: { from_seq: number } }
  | { type: 'send_message'; id: string; session: string; payload: { text: string; channel: ChannelRef } }
  | { type: 'upload_manual'; id: string; session: string; payload: { agent: string; name: string; text: string } }
  | { type: 'decide'; id: string; session: string; payload: { decision: 'yes' | 'no' } }
  | { type: 'checkpoint'; id: string; session: string; payload: Record<string, never> }
  | { type: 'inspect'; id: string; session: string; payload: Record<string, never> };

let frameCounter = 0;

/** Monotonic frame ids so acks and errors can be correlated. */
export function nextFrameId(prefix = 'f'): string {
  frameCounter += 1;
  return `${prefix}${frameCounter}`;
}

export function encodeCommand(command: WireCommand): string {
  return JSON.stringify(command);
}

export function decodeEvent(raw: string): GatewayEvent {
  return JSON.parse(raw) as GatewayEvent;
}

/**
 * Incremental decoder for the raw TCP framing (4-byte big-endian length
 * prefix). The browser path never needs this; node tooling and the
 * integration tests do.
 */
export class FrameDecoder {
  private buffer = new Uint8Array(0);

  push(chunk: Uint8Array): GatewayEvent[] {
    const merged = new Uint8Array(this.buffer.length + chunk.length);
    merged.set(this.buffer, 0);
    merged.set(chunk, this.buffer.length);
    this.buffer = merged;
    const out: GatewayEvent[] = [];
    for (;;) {
      if (this.buffer.length < 4) break;
      const view = new DataView(this.buffer.buffer, this.buffer.byteOffset);
      const length = view.getUint32(0, false);
      if (this.buffer.length < 4 + length) break;
      const body = this.buffer.slice(4, 4 + length);
      this.buffer = this.buffer.slice(4 + length);
      out.push(decodeEvent(new TextDecoder().decode(body)));
    }
    return out;
  }
}

export function encodeFrame(command: WireCommand): Uint8Array {
  const body = new TextEncoder().encode(encodeCommand(command));
  const frame = new Uint8Array(4 + body.length);
  new DataView(frame.buffer).setUint32(0, body.length, false);
  frame.set(body, 4);
  return frame;
}
