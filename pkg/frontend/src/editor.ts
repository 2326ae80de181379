/**
 * Editor adapter surface. A real extension wires these to its host API
 * (text document, notifications, progress view, diff preview); tests use
 * in-memory fakes. The command layer never touches a buffer except through
 * `replaceAll`, and only after the user accepted a preview.
 */

import { ProgressEvent, Removal } from "./protocol.js";

export interface EditorBuffer {
  getText(): string;
  replaceAll(text: string): void;
  /** 1-based inclusive selection, if any text is selected. */
  getSelection(): { startLine: number; endLine: number } | null;
}

export interface Notifier {
  info(message: string): void;
  error(message: string): void;
  /** Modal yes/no question; resolves true when confirmed. */
  confirm(message: string): Promise<boolean>;
}

export interface ProgressView {
  render(event: ProgressEvent): void;
  clear(): void;
}

export interface DiffHunk {
  startLine: number;
  endLine: number;
  removed: string;
  label?: string;
}

export interface DiffPreview {
  /** Shows a proposed edit; resolves true when the user accepts it. */
  show(original: string, proposed: string, hunks: DiffHunk[], title: string): Promise<boolean>;
}

export function removalHunks(removals: Removal[]): DiffHunk[] {
  return removals.map((removal) => ({
    startLine: removal.start_line,
    endLine: removal.end_line,
    removed: removal.text,
    label: removal.category,
  }));
}

/** Plain line-level hunks for generate/repair previews. */
export function lineDiffHunks(original: string, proposed: string): DiffHunk[] {
  const before = original.split("\n");
  const after = proposed.split("\n");
  const hunks: DiffHunk[] = [];
  let i = 0;
  let j = 0;
  while (i < before.length || j < after.length) {
    if (i < before.length && j < after.length && before[i] === after[j]) {
      i++;
      j++;
      continue;
    }
    const start = j;
    // swallow the mismatching run: advance the shorter tail first
    while (
      (i < before.length || j < after.length) &&
      !(i < before.length && j < after.length && before[i] === after[j])
    ) {
      if (j < after.length && (i >= before.length || !before.includes(after[j], i))) {
        j++;
      } else if (i < before.length) {
        i++;
      } else {
        j++;
      }
    }
    hunks.push({
      startLine: start + 1,
      endLine: Math.max(start + 1, j),
      removed: "",
      label: "changed",
    });
  }
  return hunks;
}
