unsigned __int64 __fastcall init_param(unsigned int a1, unsigned int a2)
{
  __int64 s[2]; // [rsp+0h] [rbp-58h] BYREF
  __int64 v4; // [rsp+10h] [rbp-48h]
  __int64 v5; // [rsp+18h] [rbp-40h]
  __int64 v6; // [rsp+20h] [rbp-38h]
  __int64 v7; // [rsp+28h] [rbp-30h]
  __int64 v8; // [rsp+30h] [rbp-28h]
  __int64 v9; // [rsp+38h] [rbp-20h]
  unsigned __int64 v11; // [rsp+48h] [rbp-10h]

  v11 = __readfsqword(0x28u);
  if ( !a1 || a1 > 0x40 )
    return 0LL;
  LOBYTE(s[0]) = a1;
  BYTE1(s[0]) = a2;
  *(_WORD *)((char *)s + 2) = 257;
  HIDWORD(s[0]) = 0;
  s[1] = 0LL;
  v4 = 0LL;
  v5 = 0LL;
  v6 = 0LL;
  v7 = 0LL;
  v8 = 0LL;
  v9 = 0LL;
  return mix_block(s, 64LL);
}
