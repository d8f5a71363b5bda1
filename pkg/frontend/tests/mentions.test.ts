import { describe, expect, it } from 'vitest';

import {
  BROADCAST,
  applyCompletion,
  autocomplete,
  parseLeadingMentions,
  unknownMentions,
} from '../src/mentions.js';

describe('parseLeadingMentions', () => {
  it('collects the leading run and stops at plain text', () => {
    expect(parseLeadingMentions('@Rover1 @Dog1 go east')).toEqual(['Rover1', 'Dog1']);
    expect(parseLeadingMentions('hello @Rover1')).toEqual([]);
  });

  it('maps @all to the broadcast marker and dedupes', () => {
    expect(parseLeadingMentions('@all @Rover1 @all stop')).toEqual([BROADCAST, 'Rover1']);
  });
});

describe('unknownMentions', () => {
  const roster = ['Rover1', 'Dog1'];

  it('flags names outside the roster before send', () => {
    expect(unknownMentions('@Ghost do it', roster)).toEqual(['Ghost']);
    expect(unknownMentions('@Rover1 ok', roster)).toEqual([]);
    expect(unknownMentions('@all ok', roster)).toEqual([]);
  });
});

describe('autocomplete', () => {
  const roster = ['Rover1', 'Rover2', 'Dog1'];

  it('offers prefix matches for the token under the caret', () => {
    const text = '@Ro';
    const state = autocomplete(text, text.length, roster);
    expect(state.options).toEqual(['Rover1', 'Rover2']);
  });

  it('is inactive outside an @token', () => {
    expect(autocomplete('plain text', 5, roster).options).toEqual([]);
  });

  it('offers everyone plus all on a bare sigil', () => {
    const state = autocomplete('@', 1, roster);
    expect(state.options).toEqual(['Rover1', 'Rover2', 'Dog1', 'all']);
  });

  it('applies a completion in place', () => {
    const next = applyCompletion('@Ro', 3, 'Rover1');
    expect(next.text).toBe('@Rover1 ');
    expect(next.caret).toBe(8);
  });
});
