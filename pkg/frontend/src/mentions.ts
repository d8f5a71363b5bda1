/**
 * Mention handling for the input box: leading '@tokens' address agents,
 * '@all' broadcasts, anything later in the text is literal.
 */

export const BROADCAST = '@all';

/** Leading whitespace-separated '@token' run, deduplicated keeping first. */
export function parseLeadingMentions(text: string): string[] {
  const mentions: string[] = [];
  const seen = new Set<string>();
  for (const token of text.trimStart().split(/\s+/)) {
    if (!token.startsWith('@')) break;
    const name = token.slice(1);
    if (!name) break; // bare sigil: let the gateway report it
    const mention = name === 'all' ? BROADCAST : name;
    if (!seen.has(mention)) {
      seen.add(mention);
      mentions.push(mention);
    }
  }
  return mentions;
}

/** Names mentioned but absent from the roster (flagged before send). */
export function unknownMentions(text: string, roster: string[]): string[] {
  const known = new Set(roster);
  return parseLeadingMentions(text).filter(
    (m) => m !== BROADCAST && !known.has(m),
  );
}

export interface AutocompleteState {
  /** start offset of the '@' under the caret, or -1 when inactive */
  anchor: number;
  options: string[];
}

/**
 * Autocomplete for the token containing the caret: active while the
 * caret sits in an '@'-prefixed token, offering roster names (and 'all')
 * matching the typed prefix.
 */
export function autocomplete(
  text: string,
  caret: number,
  roster: string[],
): AutocompleteState {
  const before = text.slice(0, caret);
  const match = /(^|\s)(@[^\s@]*)$/.exec(before);
  if (!match) return { anchor: -1, options: [] };
  const anchor = caret - match[2].length;
  const prefix = match[2].slice(1).toLowerCase();
  const options = [...roster, 'all'].filter((name) =>
    name.toLowerCase().startsWith(prefix),
  );
  return { anchor, options };
}

/** Replace the active '@token' with the chosen completion. */
export function applyCompletion(
  text: string,
  caret: number,
  choice: string,
): { text: string; caret: number } {
  const state = autocomplete(text, caret, [choice]);
  if (state.anchor < 0) return { text, caret };
  const completed = `@${choice} `;
  const next = text.slice(0, state.anchor) + completed + text.slice(caret);
  return { text: next, caret: state.anchor + completed.length };
}
