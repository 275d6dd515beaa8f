__int64 __fastcall op_div(__int64 a1, __int64 a2)
{
  return a1 / a2;
}
