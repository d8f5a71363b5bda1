/**
 * Gateway connection over the browser's WebSocket, with reconnect replay
 * from the last seen event seq.
 */

import type { GatewayEvent, WireCommand } from './protocol.js';
import { decodeEvent, encodeCommand, nextFrameId } from './protocol.js';

export interface Transport {
  send(command: WireCommand): void;
  close(): void;
}

export interface ConnectionHooks {
  onEvent(event: GatewayEvent): void;
  onStateChange?(state: 'connecting' | 'open' | 'closed'): void;
}

export class WebSocketTransport implements Transport {
  private socket: WebSocket | null = null;
  private closed = false;
  private retryDelayMs = 500;

  constructor(
    private readonly url: string,
    private readonly hooks: ConnectionHooks,
    private readonly resubscribe?: () => WireCommand | null,
  ) {
    this.connect();
  }

  private connect(): void {
    this.hooks.onStateChange?.('connecting');
    const socket = new WebSocket(this.url);
    this.socket = socket;
    socket.onopen = () => {
      this.retryDelayMs = 500;
      this.hooks.onStateChange?.('open');
      const replay = this.resubscribe?.();
      if (replay) this.send(replay);
    };
    socket.onmessage = (message) => {
      this.hooks.onEvent(decodeEvent(String(message.data)));
    };
    socket.onclose = () => {
      this.hooks.onStateChange?.('closed');
      if (this.closed) return;
      // auto-resubscribe: replay resumes from the last seen seq
      setTimeout(() => this.connect(), this.retryDelayMs);
      this.retryDelayMs = Math.min(this.retryDelayMs * 2, 10_000);
    };
  }

  send(command: WireCommand): void {
    this.socket?.send(encodeCommand(command));
  }

  close(): void {
    this.closed = true;
    this.socket?.close();
  }
}

/** Subscribe command resuming a session from the last applied event. */
export function resumeSubscription(
  sessionId: string,
  lastEventSeq: number,
): WireCommand {
  return {
    type: 'subscribe',
    id: nextFrameId('sub'),
    session: sessionId,
    payload: { from_seq: lastEventSeq },
  };
}
