/** Local draft persistence so a refresh or dropped connection never loses a
 * session: the rating draft records how far the player got; the studio draft
 * keeps the last composed controls. */

export interface RatingDraft {
  sessionId: string;
  playerId: string;
  total: number;
  rated: number;
}

export interface DraftStore {
  loadRating(): RatingDraft | null;
  saveRating(draft: RatingDraft): void;
  clearRating(): void;
}

const RATING_KEY = "floorgen.rating.draft";

export class LocalDraftStore implements DraftStore {
  constructor(private readonly backend: Storage = window.localStorage) {}

  loadRating(): RatingDraft | null {
    const raw = this.backend.getItem(RATING_KEY);
    if (!raw) return null;
    try {
      const draft = JSON.parse(raw) as RatingDraft;
      return typeof draft.sessionId === "string" ? draft : null;
    } catch {
      return null;
    }
  }

  saveRating(draft: RatingDraft): void {
    this.backend.setItem(RATING_KEY, JSON.stringify(draft));
  }

  clearRating(): void {
    this.backend.removeItem(RATING_KEY);
  }
}

export class MemoryDraftStore implements DraftStore {
  private draft: RatingDraft | null = null;

  loadRating(): RatingDraft | null {
    return this.draft;
  }

  saveRating(draft: RatingDraft): void {
    this.draft = { ...draft };
  }

  clearRating(): void {
    this.draft = null;
  }
}
