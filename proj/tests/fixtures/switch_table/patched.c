__int64 __fastcall dispatch(unsigned int a1, __int64 a2)
{
  __int64 result; // rax

  switch ( a1 )
  {
    case 0u:
      result = a2 + 11;
      break;
    case 1u:
      result = 3 * a2;
      break;
    case 2u:
      result = a2 - 7;
      break;
    case 3u:
      result = a2 ^ 0x55;
      break;
    case 4u:
      result = 4 * a2;
      break;
    case 5u:
      result = a2 >> 1;
      break;
    case 6u:
      result = -a2;
      break;
    case 7u:
      if ( a2 )
        result = 100 / a2;
      else
        result = 0LL;
      break;
    default:
      result = -1LL;
      break;
  }
  return result;
}
