/** Thin client for the /v1 endpoints. */

import type {
  ApiError,
  ApiRecommendResponse,
  ApiValidateResponse,
  BibForm,
} from './types.js';

export class ApiRequestError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    detail: string,
  ) {
    super(`${code} (${status}): ${detail}`);
  }
}

type FetchLike = typeof fetch;

export class ApiClient {
  private readonly fetchImpl: FetchLike;

  constructor(
    private readonly baseUrl: string,
    fetchImpl: FetchLike = fetch,
  ) {
    // plain call keeps native fetch happy in browsers (no bound receiver)
    this.fetchImpl = (input, init) => fetchImpl(input, init);
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(body),
    });
    if (!response.ok) {
      const fallback: ApiError = { error: `http_${response.status}`, detail: response.statusText };
      const payload = (await response.json().catch(() => fallback)) as ApiError;
      throw new ApiRequestError(response.status, payload.error, payload.detail ?? '');
    }
    return (await response.json()) as T;
  }

  validate(terms: string[]): Promise<ApiValidateResponse> {
    return this.post<ApiValidateResponse>('/v1/validate', { terms });
  }

  recommend(bib: BibForm, notes?: string): Promise<ApiRecommendResponse> {
    const combinedNotes = [bib.notes, notes].filter((n) => n && n.trim()).join('\n');
    return this.post<ApiRecommendResponse>('/v1/recommend', {
      title: bib.title,
      contributors: bib.contributors,
      summary: bib.summary || null,
      table_of_contents: bib.tableOfContents || null,
      notes: combinedNotes || null,
    });
  }

  async health(): Promise<boolean> {
    try {
      const response = await this.fetchImpl(`${this.baseUrl}/healthz`);
      return response.ok;
    } catch {
      return false;
    }
  }
}
