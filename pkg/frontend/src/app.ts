/**
 * Operator console wiring. Six regions:
 *  1 roster panel (add & query robots, status badges, manual drop zones)
 *  2 chat list (group + one thread per robot)
 *  3 chat info header
 *  4 cooperation group config (scenario + mode for a new session)
 *  5 main chat window
 *  6 input box with @-mention autocomplete
 *
 * All business logic is server-side; this file renders SessionStore and
 * forwards commands.
 */

import { nextFrameId, type ChannelRef, type GatewayEvent, type WireCommand } from './protocol.js';
import { SessionStore } from './state.js';
import { DecisionPrompt } from './decisions.js';
import { autocomplete, applyCompletion, unknownMentions } from './mentions.js';
import { WebSocketTransport, resumeSubscription } from './transport.js';
import { isVersionBump, manualBaseName, specRows, vetManual } from './upload.js';

const $ = (id: string): HTMLElement => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el;
};

let store = new SessionStore();
let transport: WebSocketTransport | null = null;
let activeThread = 'group';
let roster: string[] = [];

function send(command: WireCommand): void {
  transport?.send(command);
}

function connect(): void {
  const url = (($('gateway-url') as HTMLInputElement).value || '').trim();
  transport?.close();
  store = new SessionStore();
  transport = new WebSocketTransport(
    url,
    {
      onEvent: handleEvent,
      onStateChange: (state) => {
        $('connection-banner').dataset.state = state;
        $('connection-banner').textContent =
          state === 'open' ? 'connected' : state === 'closed' ? 'connection lost - retrying' : 'connecting';
      },
    },
    () =>
      store.sessionId
        ? resumeSubscription(store.sessionId, store.lastEventSeq)
        : null,
  );
}

function startSession(): void {
  const scenarioText = ($('scenario-input') as HTMLTextAreaElement).value;
  const mode = ($('mode-select') as HTMLSelectElement).value;
  let scenario: unknown;
  try {
    scenario = JSON.parse(scenarioText);
  } catch (err) {
    $('config-error').textContent = `scenario JSON: ${String(err)}`;
    return;
  }
  $('config-error').textContent = '';
  const selected = Array.from(
    document.querySelectorAll<HTMLInputElement>('#coop-roster input:checked'),
  ).map((box) => box.value);
  const data = scenario as { robots?: Array<{ name: string }> };
  if (selected.length && data.robots) {
    // cooperation group: only the ticked robots join the new session
    data.robots = data.robots.filter((r) => selected.includes(r.name));
  }
  send({
    type: 'start_session',
    id: nextFrameId(),
    payload: { scenario, config: { mode, decision_policy: 'interactive' } },
  });
}

const decisions = new DecisionPrompt((decision) => {
  if (!store.sessionId) return;
  send({
    type: 'decide',
    id: nextFrameId('d'),
    session: store.sessionId,
    payload: { decision },
  });
});

function handleEvent(event: GatewayEvent): void {
  if (event.type === 'ack' || event.type === 'hello') {
    if (typeof event['session'] === 'string' && !store.sessionId) {
      store.sessionId = event['session'] as string;
    }
    return;
  }
  if (event.type === 'error') {
    $('chat-info').textContent = `error: ${event.error ?? 'unknown'}`;
    return;
  }
  if (!store.applyEvent(event)) return; // duplicate from replay
  render();
}

function render(): void {
  renderRoster();
  renderThreads();
  renderTimeline();
  renderDecision();
  $('phase-badge').textContent = store.phase;
  const report = store.report;
  $('chat-info').textContent = report
    ? `finished: ${report['success'] ? 'all tasks done' : 'failed'} in ${report['step_count']} steps`
    : `${activeThread === 'group' ? 'group chat' : `direct: ${activeThread}`} - ${store.summaryDigest}`;
}

function renderRoster(): void {
  const list = $('roster-list');
  list.replaceChildren();
  roster = [...store.roster.keys()].sort();
  for (const name of roster) {
    const badge = store.roster.get(name)!;
    const row = document.createElement('li');
    row.className = `robot-badge health-${badge.health === 'ok' ? 'ok' : 'fault'}`;
    row.textContent = `${name}  ${badge.battery?.toFixed(0) ?? '?'}%  ${badge.health}${badge.task ? `  [${badge.task}]` : ''}`;
    row.addEventListener('dragover', (ev) => ev.preventDefault());
    row.addEventListener('drop', (ev) => dropManual(ev, name));
    const manual = store.manuals.get(name);
    if (manual) {
      const card = document.createElement('dl');
      card.className = 'spec-card';
      for (const [label, value] of specRows(manual)) {
        const dt = document.createElement('dt');
        dt.textContent = label;
        const dd = document.createElement('dd');
        dd.textContent = value;
        card.append(dt, dd);
      }
      if (isVersionBump(manual)) {
        const bump = document.createElement('span');
        bump.className = 'version-bump';
        bump.textContent = `v${manual.version}`;
        row.appendChild(bump);
      }
      row.appendChild(card);
    }
    list.appendChild(row);
  }
}

function renderThreads(): void {
  const list = $('thread-list');
  list.replaceChildren();
  for (const key of ['group', ...roster]) {
    const item = document.createElement('li');
    item.textContent = key === 'group' ? '# group' : `@ ${key}`;
    item.className = key === activeThread ? 'active' : '';
    item.addEventListener('click', () => {
      activeThread = key;
      render();
    });
    list.appendChild(item);
  }
}

function renderTimeline(): void {
  const pane = $('timeline');
  pane.replaceChildren();
  for (const entry of store.thread(activeThread)) {
    const row = document.createElement('div');
    row.className = `line style-${entry.style}`;
    row.textContent = `${entry.sender}: ${entry.text}`;
    pane.appendChild(row);
  }
  pane.scrollTop = pane.scrollHeight;
}

function renderDecision(): void {
  const modal = $('decision-modal');
  const current = store.currentDecision();
  if (!current) {
    modal.hidden = true;
    return;
  }
  modal.hidden = false;
  $('decision-question').textContent = current.question;
  $('decision-context').textContent = current.context;
  const submitted = decisions.isSubmitted(current);
  ($('decision-yes') as HTMLButtonElement).disabled = submitted;
  ($('decision-no') as HTMLButtonElement).disabled = submitted;
}

function composeSend(): void {
  if (!store.sessionId) return;
  const input = $('compose') as HTMLTextAreaElement;
  const text = input.value.trim();
  if (!text) return;
  const unknown = unknownMentions(text, roster);
  if (unknown.length) {
    $('compose-warning').textContent = `unknown agent(s): ${unknown.join(', ')}`;
    return;
  }
  $('compose-warning').textContent = '';
  const channel: ChannelRef =
    activeThread === 'group'
      ? { kind: 'group', target: null }
      : { kind: 'direct', target: activeThread };
  send({
    type: 'send_message',
    id: nextFrameId('m'),
    session: store.sessionId,
    payload: { text, channel },
  });
  input.value = '';
  renderAutocomplete();
}

function renderAutocomplete(): void {
  const input = $('compose') as HTMLTextAreaElement;
  const box = $('mention-menu');
  const state = autocomplete(input.value, input.selectionStart ?? 0, roster);
  box.replaceChildren();
  box.hidden = state.options.length === 0;
  for (const option of state.options) {
    const item = document.createElement('li');
    item.textContent = `@${option}`;
    item.addEventListener('mousedown', (ev) => {
      ev.preventDefault();
      const next = applyCompletion(input.value, input.selectionStart ?? 0, option);
      input.value = next.text;
      input.setSelectionRange(next.caret, next.caret);
      renderAutocomplete();
    });
    box.appendChild(item);
  }
}

async function dropManual(ev: DragEvent, agent: string): Promise<void> {
  ev.preventDefault();
  const file = ev.dataTransfer?.files?.[0];
  if (!file || !store.sessionId) return;
  const content = await file.text();
  const vet = vetManual(file.name, file.size, content);
  if (!vet.ok) {
    $('compose-warning').textContent = `${file.name}: ${vet.reason}`;
    return;
  }
  send({
    type: 'upload_manual',
    id: nextFrameId('u'),
    session: store.sessionId,
    payload: { agent, name: manualBaseName(file.name), text: content },
  });
}

export function init(): void {
  $('connect-btn').addEventListener('click', connect);
  $('start-btn').addEventListener('click', startSession);
  $('send-btn').addEventListener('click', composeSend);
  const compose = $('compose') as HTMLTextAreaElement;
  compose.addEventListener('input', renderAutocomplete);
  compose.addEventListener('keydown', (ev) => {
    if (ev.key === 'Enter' && !ev.shiftKey) {
      ev.preventDefault();
      composeSend();
    }
  });
  $('decision-yes').addEventListener('click', () => {
    decisions.submit(store.currentDecision(), 'yes');
    renderDecision();
  });
  $('decision-no').addEventListener('click', () => {
    decisions.submit(store.currentDecision(), 'no');
    renderDecision();
  });
}

if (typeof document !== 'undefined') {
  document.addEventListener('DOMContentLoaded', init);
}
