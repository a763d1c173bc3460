/**
 * Reader for the CLI's CSV artifacts: an optional `# key=value ...` comment
 * line, a header row, then numeric rows.  Fails fast when a required column
 * is missing.
 */

export interface CsvTable {
  meta: Record<string, string>;
  columns: string[];
  rows: number[][];
}

export function parseCsv(text: string, required: string[] = []): CsvTable {
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  const meta: Record<string, string> = {};
  let start = 0;
  if (lines[0]?.startsWith('#')) {
    for (const token of lines[0].slice(1).trim().split(/\s+/)) {
      const eq = token.indexOf('=');
      if (eq > 0) meta[token.slice(0, eq)] = token.slice(eq + 1);
    }
    start = 1;
  }
  if (start >= lines.length) throw new Error('empty CSV: no header row');
  const columns = lines[start].split(',').map((c) => c.trim());
  for (const col of required) {
    if (!columns.includes(col)) {
      throw new Error(`missing column ${col} (have: ${columns.join(', ')})`);
    }
  }
  const rows: number[][] = [];
  for (const line of lines.slice(start + 1)) {
    rows.push(line.split(',').map(Number));
  }
  return { meta, columns, rows };
}

export function column(table: CsvTable, name: string): number[] {
  const idx = table.columns.indexOf(name);
  if (idx < 0) throw new Error(`missing column ${name}`);
  return table.rows.map((r) => r[idx]);
}
