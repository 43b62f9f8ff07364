/**
 * Typed client for the translation service's JSON API.
 *
 * Everything the workbench knows about the backend goes through this file;
 * only the /v1 routes (plus /health) are used. The prompt text is a debug
 * facility of the service and is deliberately never requested here.
 */

export type StrategyKind =
  | 'zero_shot'
  | 'few_shot_fuzzy'
  | 'few_shot_fuzzy_terms'
  | 'few_shot_fuzzy_new_mt';

export interface StrategyBody {
  kind: StrategyKind;
  top_k?: number;
}

export interface ProjectSummary {
  project_id: string;
  source_lang: string;
  target_lang: string;
  segments: number;
  glossary_entries: number;
}

export interface MatchRow {
  id: number;
  source: string;
  target: string;
  origin: string;
  score: number;
}

export interface TermRow {
  source: string;
  target: string;
}

export interface TranslationResponse {
  schema: number;
  source: string;
  output: string;
  kind: string;
  source_lang: string;
  target_lang: string;
  matches: { id: number; score: number; source: string; target: string }[];
  terms: TermRow[];
  mt: string | null;
  warnings: string[];
  error: string | null;
}

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
    readonly stage?: string,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function parseError(response: Response): Promise<ApiError> {
  let detail = `${response.status} ${response.statusText}`;
  let stage: string | undefined;
  try {
    const body = (await response.json()) as { detail?: unknown; stage?: unknown };
    if (typeof body.detail === 'string') detail = body.detail;
    if (typeof body.stage === 'string') stage = body.stage;
  } catch {
    // non-JSON error body; keep the status line
  }
  return new ApiError(detail, response.status, stage);
}

export class WorkbenchApi {
  private readonly fetchImpl: FetchLike;

  constructor(
    readonly baseUrl: string,
    fetchImpl?: FetchLike,
  ) {
    // bind so a bare window.fetch keeps its receiver
    this.fetchImpl = fetchImpl ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
    signal?: AbortSignal,
  ): Promise<T> {
    const init: RequestInit = { method, signal };
    if (body !== undefined) {
      init.headers = { 'Content-Type': 'application/json' };
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchImpl(this.baseUrl + path, init);
    if (!response.ok) {
      throw await parseError(response);
    }
    return (await response.json()) as T;
  }

  async createProject(sourceLang: string, targetLang: string): Promise<string> {
    const body = await this.request<{ project_id: string }>('POST', '/v1/projects', {
      source_lang: sourceLang,
      target_lang: targetLang,
    });
    return body.project_id;
  }

  listProjects(): Promise<ProjectSummary[]> {
    return this.request<ProjectSummary[]>('GET', '/v1/projects');
  }

  async uploadTmTsv(projectId: string, tsv: string): Promise<{ ingested: number; dropped: number }> {
    const response = await this.fetchImpl(
      `${this.baseUrl}/v1/projects/${projectId}/tm?format=tsv`,
      { method: 'POST', headers: { 'Content-Type': 'text/plain' }, body: tsv },
    );
    if (!response.ok) {
      throw await parseError(response);
    }
    return (await response.json()) as { ingested: number; dropped: number };
  }

  async matches(
    projectId: string,
    query: string,
    k: number,
    signal?: AbortSignal,
  ): Promise<MatchRow[]> {
    const params = new URLSearchParams({ q: query, k: String(k) });
    const body = await this.request<{ matches: MatchRow[] }>(
      'GET',
      `/v1/projects/${projectId}/matches?${params}`,
      undefined,
      signal,
    );
    return body.matches;
  }

  async approve(projectId: string, source: string, target: string): Promise<number> {
    const body = await this.request<{ pair_id: number }>(
      'POST',
      `/v1/projects/${projectId}/approve`,
      { source, target },
    );
    return body.pair_id;
  }

  translate(
    projectId: string,
    source: string,
    strategy: StrategyBody,
    signal?: AbortSignal,
  ): Promise<TranslationResponse> {
    return this.request<TranslationResponse>(
      'POST',
      `/v1/projects/${projectId}/translate`,
      { source, strategy },
      signal,
    );
  }

  compileGlossary(projectId: string): Promise<{ entries: number }> {
    return this.request<{ entries: number }>(
      'POST',
      `/v1/projects/${projectId}/glossary/compile`,
      {},
    );
  }
}
